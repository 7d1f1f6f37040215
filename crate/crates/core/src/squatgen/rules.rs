//! Per-rule candidate generation over a single name label.

use std::sync::OnceLock;

use super::PermutationRule;

pub const DEFAULT_TLDS: [&str; 7] = ["com", "net", "org", "io", "xyz", "app", "finance"];
pub const DEFAULT_TERMS: [&str; 3] = ["nft", "mint", "claim"];

const HOMOGLYPHS: &str = include_str!("../../data/homoglyphs.txt");

/// The bundled ASCII homoglyph table as `(original, replacement)` pairs.
pub fn default_homoglyphs() -> &'static [(String, String)] {
    static TABLE: OnceLock<Vec<(String, String)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        HOMOGLYPHS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                Some((parts.next()?.to_string(), parts.next()?.to_string()))
            })
            .collect()
    })
}

/// Keys adjacent to `c` on a QWERTY keyboard (letters and digits only).
pub fn qwerty_neighbors(c: char) -> &'static str {
    match c {
        '1' => "2q",
        '2' => "3wq1",
        '3' => "4ew2",
        '4' => "5re3",
        '5' => "6tr4",
        '6' => "7yt5",
        '7' => "8uy6",
        '8' => "9iu7",
        '9' => "0oi8",
        '0' => "po9",
        'q' => "12wa",
        'w' => "3esaq2",
        'e' => "4rdsw3",
        'r' => "5tfde4",
        't' => "6ygfr5",
        'y' => "7uhgt6",
        'u' => "8ijhy7",
        'i' => "9okju8",
        'o' => "0plki9",
        'p' => "lo0",
        'a' => "qwsz",
        's' => "edxzaw",
        'd' => "rfcxse",
        'f' => "tgvcdr",
        'g' => "yhbvft",
        'h' => "ujnbgy",
        'j' => "ikmnhu",
        'k' => "olmji",
        'l' => "kop",
        'z' => "asx",
        'x' => "zsdc",
        'c' => "xdfv",
        'v' => "cfgb",
        'b' => "vghn",
        'n' => "bhjm",
        'm' => "njk",
        _ => "",
    }
}

fn with_suffix(names: impl IntoIterator<Item = String>, suffix: &str) -> Vec<String> {
    names.into_iter().map(|n| format!("{n}.{suffix}")).collect()
}

/// Raw (unvalidated, possibly duplicated) domains for one rule.
pub(super) fn generate(rule: &PermutationRule, name: &str, suffix: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let n = chars.len();
    let rebuild = |v: &[char]| v.iter().collect::<String>();
    match rule {
        PermutationRule::Omission => with_suffix(
            (0..n).map(|i| {
                let mut v = chars.clone();
                v.remove(i);
                rebuild(&v)
            }),
            suffix,
        ),
        PermutationRule::Insertion => {
            let mut out = Vec::new();
            for (i, &c) in chars.iter().enumerate() {
                for k in qwerty_neighbors(c).chars() {
                    let mut before = chars.clone();
                    before.insert(i, k);
                    out.push(rebuild(&before));
                    let mut after = chars.clone();
                    after.insert(i + 1, k);
                    out.push(rebuild(&after));
                }
            }
            with_suffix(out, suffix)
        }
        PermutationRule::Transposition => with_suffix(
            (0..n.saturating_sub(1))
                .filter(|&i| chars[i] != chars[i + 1])
                .map(|i| {
                    let mut v = chars.clone();
                    v.swap(i, i + 1);
                    rebuild(&v)
                }),
            suffix,
        ),
        PermutationRule::Repetition => with_suffix(
            (0..n).map(|i| {
                let mut v = chars.clone();
                v.insert(i, chars[i]);
                rebuild(&v)
            }),
            suffix,
        ),
        PermutationRule::Replacement => {
            let mut out = Vec::new();
            for (i, &c) in chars.iter().enumerate() {
                for k in qwerty_neighbors(c).chars() {
                    let mut v = chars.clone();
                    v[i] = k;
                    out.push(rebuild(&v));
                }
            }
            with_suffix(out, suffix)
        }
        PermutationRule::Homoglyph(table) => {
            let mut out = Vec::new();
            for (from, to) in table {
                let mut start = 0;
                while let Some(pos) = name[start..].find(from.as_str()) {
                    let at = start + pos;
                    out.push(format!("{}{}{}", &name[..at], to, &name[at + from.len()..]));
                    start = at + 1;
                }
            }
            with_suffix(out, suffix)
        }
        PermutationRule::Bitsquat => {
            let mut out = Vec::new();
            for (i, &c) in chars.iter().enumerate() {
                if !c.is_ascii() {
                    continue;
                }
                for bit in 0..8 {
                    let flipped = (c as u8) ^ (1 << bit);
                    if flipped.is_ascii_lowercase() || flipped.is_ascii_digit() || flipped == b'-' {
                        let mut v = chars.clone();
                        v[i] = flipped as char;
                        out.push(rebuild(&v));
                    }
                }
            }
            with_suffix(out, suffix)
        }
        PermutationRule::Hyphenation => with_suffix(
            (1..n).map(|i| format!("{}-{}", rebuild(&chars[..i]), rebuild(&chars[i..]))),
            suffix,
        ),
        PermutationRule::TldSwap(tlds) => tlds
            .iter()
            .map(|t| t.trim().trim_start_matches('.').to_ascii_lowercase())
            .filter(|t| t != suffix)
            .map(|t| format!("{name}.{t}"))
            .collect(),
        PermutationRule::TermAffix(terms) => {
            let mut out = Vec::new();
            for t in terms {
                let t = t.trim().to_ascii_lowercase();
                out.push(format!("{t}{name}"));
                out.push(format!("{name}{t}"));
                out.push(format!("{t}-{name}"));
                out.push(format!("{name}-{t}"));
            }
            with_suffix(out, suffix)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homoglyph_table_parses() {
        let t = default_homoglyphs();
        assert!(t.contains(&("m".to_string(), "rn".to_string())));
        assert!(t.iter().all(|(a, b)| !a.is_empty() && !b.is_empty()));
    }

    #[test]
    fn hyphenation_positions() {
        let got = generate(&PermutationRule::Hyphenation, "abc", "com");
        assert_eq!(got, vec!["a-bc.com", "ab-c.com"]);
    }

    #[test]
    fn transposition_skips_equal_neighbours() {
        assert_eq!(
            generate(&PermutationRule::Transposition, "aab", "com"),
            vec!["aba.com"]
        );
    }
}
