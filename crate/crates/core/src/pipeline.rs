//! End-to-end run: squat → ct-filter → dedupe → fetch → analyze → features →
//! classify, writing one artifact per stage plus a content-hash manifest.
//!
//! Artifacts depend only on the inputs, `seed` and `as_of`, so two runs over
//! the same config produce byte-identical manifests. Wall-clock timings go
//! to `run.meta.json`, which the manifest does not cover.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{train, Dataset, ForestModel};
use crate::config::PipelineConfig;
use crate::ctingest::{filter_stream, read_stream, FilterStats, Watch};
use crate::features::{
    extract_features, load_matrix, write_matrix, CsvAccountProvider, CsvNameProvider,
    FeatureConfig, MatrixRow,
};
use crate::registry::{load_registry, CollectionRegistry};
use crate::siteanalysis::{analyze, SiteAnalysis};
use crate::snapshot::{
    fetch_all, store_snapshot, FetchLimits, FetchStatus, FixtureTransport, HttpTransport,
    SiteSnapshot, Transport,
};
use crate::squatgen::{dedupe_candidates, fuzz_seed, CandidateDomain, CandidateSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "run.meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Squat,
    CtFilter,
    Dedupe,
    Fetch,
    Analyze,
    Features,
    Classify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Squat => "squat",
            Stage::CtFilter => "ct-filter",
            Stage::Dedupe => "dedupe",
            Stage::Fetch => "fetch",
            Stage::Analyze => "analyze",
            Stage::Features => "features",
            Stage::Classify => "classify",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("output directory {0} is not empty and was not written by a previous run")]
    OutputDirInUse(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub stages_completed: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    pub files: Vec<ManifestEntry>,
}

/// One line of `fetch.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub domain: String,
    pub url: String,
    pub status: Option<FetchStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One row of `verdicts.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub snapshot_id: String,
    pub url: String,
    pub phishing: bool,
    pub probability: f64,
    pub attack_vector: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunCounts {
    pub fuzzed: usize,
    pub ct_records: usize,
    pub ct_malformed: usize,
    pub ct_emitted: usize,
    pub candidates: usize,
    pub overlap: usize,
    pub fetched_ok: usize,
    pub analyzed: usize,
    pub phishing_verdicts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub counts: RunCounts,
    pub output_dir: PathBuf,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    completed: Vec<Stage>,
    timings_ms: BTreeMap<String, u128>,
    counts: RunCounts,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stage_err(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Empties `dir` if a previous run owns it; refuses foreign content.
fn prepare_output(dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(io(dir))?.peekable();
        if entries.peek().is_some() {
            if !dir.join(MANIFEST_FILE).exists() && !dir.join(META_FILE).exists() {
                return Err(PipelineError::OutputDirInUse(dir.display().to_string()));
            }
            std::fs::remove_dir_all(dir).map_err(io(dir))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(io(dir))
}

fn write_ndjson<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    for it in items {
        serde_json::to_writer(&mut w, &it).map_err(|e| io(path)(e.into()))?;
        w.write_all(b"\n").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            walk(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Hashes every file under `dir` except the manifest and the metadata sidecar.
pub fn hash_tree(dir: &Path) -> std::io::Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    let mut entries: Vec<ManifestEntry> = files
        .into_iter()
        .filter(|p| p != Path::new(MANIFEST_FILE) && p != Path::new(META_FILE))
        .map(|rel| {
            let bytes = std::fs::read(dir.join(&rel))?;
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok(ManifestEntry {
                path,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            })
        })
        .collect::<std::io::Result<_>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn timed<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut Self) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let start = Instant::now();
        let r = f(self)?;
        self.timings_ms
            .insert(stage.to_string(), start.elapsed().as_millis());
        self.completed.push(stage);
        log::info!("stage {stage} done");
        Ok(r)
    }

    fn manifest(&self, failed: Option<Stage>) -> Result<Manifest, PipelineError> {
        Ok(Manifest {
            format: "scout-manifest/1".into(),
            seed: self.cfg.seed,
            stages_completed: self.completed.clone(),
            failed_stage: failed,
            files: hash_tree(&self.out).map_err(io(&self.out))?,
        })
    }

    fn finish(
        &self,
        failed: Option<Stage>,
        started: chrono::DateTime<Utc>,
    ) -> Result<Manifest, PipelineError> {
        let manifest = self.manifest(failed)?;
        let mpath = self.path(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&mpath, text + "\n").map_err(io(&mpath))?;
        let meta = serde_json::json!({
            "seed": self.cfg.seed,
            "as_of": self.cfg.as_of,
            "started_at": started,
            "finished_at": Utc::now(),
            "stage_millis": self.timings_ms,
            "counts": self.counts,
            "failed_stage": failed,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let meta_path = self.path(META_FILE);
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n",
        )
        .map_err(io(&meta_path))?;
        Ok(manifest)
    }

    fn squat(&mut self, registry: &CollectionRegistry) -> Result<CandidateSet, PipelineError> {
        let rules = self.cfg.rules().map_err(|e| stage_err(Stage::Squat)(&e))?;
        let seeds: Vec<_> = match self.cfg.registry.top {
            Some(n) => registry.top_by_rank(n),
            None => registry.records().iter().collect(),
        };
        let sets: Vec<CandidateSet> = seeds
            .par_iter()
            .map(|r| fuzz_seed(&r.official_domain, Some(&r.slug), &rules, self.cfg.as_of))
            .collect::<Result<_, _>>()
            .map_err(|e| stage_err(Stage::Squat)(&e))?;
        let (set, _) = dedupe_candidates(sets.into_iter().map(CandidateSet::into_vec));
        self.counts.fuzzed = set.len();
        write_ndjson(&self.path("squat.ndjson"), set.iter())?;
        Ok(set)
    }

    fn ct_filter(&mut self, fuzzed: &CandidateSet) -> Result<Vec<CandidateDomain>, PipelineError> {
        let (found, stats) = match &self.cfg.ct.stream {
            Some(p) => {
                let f = File::open(p)
                    .map_err(|e| stage_err(Stage::CtFilter)(&format!("{}: {e}", p.display())))?;
                let watch = Watch {
                    candidates: fuzzed,
                    terms: self.cfg.squat.terms.clone(),
                };
                let since = self.cfg.ct.since.unwrap_or(chrono::DateTime::UNIX_EPOCH);
                filter_stream(
                    read_stream(BufReader::new(f), self.cfg.as_of),
                    &watch,
                    since,
                )
            }
            None => (Vec::new(), FilterStats::default()),
        };
        self.counts.ct_records = stats.records;
        self.counts.ct_malformed = stats.malformed;
        self.counts.ct_emitted = stats.emitted;
        write_ndjson(&self.path("ct.ndjson"), &found)?;
        Ok(found)
    }

    fn dedupe(
        &mut self,
        fuzzed: CandidateSet,
        ct: Vec<CandidateDomain>,
    ) -> Result<CandidateSet, PipelineError> {
        let (set, overlap) = dedupe_candidates([fuzzed.into_vec(), ct]);
        self.counts.candidates = set.len();
        self.counts.overlap = overlap;
        write_ndjson(&self.path("candidates.ndjson"), set.iter())?;
        Ok(set)
    }

    fn fetch(
        &mut self,
        candidates: &CandidateSet,
    ) -> Result<Vec<(CandidateDomain, SiteSnapshot)>, PipelineError> {
        let limits = FetchLimits {
            max_bytes: self.cfg.fetch.max_bytes,
            timeout: std::time::Duration::from_secs(self.cfg.fetch.timeout_secs),
            max_scripts: self.cfg.fetch.max_scripts,
        };
        let transport: Box<dyn Transport> = match &self.cfg.fetch.fixture_root {
            Some(root) => Box::new(FixtureTransport::new(root)),
            None => Box::new(HttpTransport::new(limits.timeout)),
        };
        let cands: Vec<CandidateDomain> = candidates.iter().cloned().collect();
        let urls: Vec<String> = cands
            .iter()
            .map(|c| format!("https://{}/", c.domain))
            .collect();
        let results = fetch_all(
            &urls,
            &limits,
            transport.as_ref(),
            self.cfg.parallel,
            self.cfg.as_of,
        );
        let corpus = self.path("corpus");
        let mut records = Vec::with_capacity(urls.len());
        let mut live = Vec::new();
        for ((cand, url), res) in cands.into_iter().zip(urls).zip(results) {
            let mut rec = FetchRecord {
                domain: cand.domain.clone(),
                url,
                status: None,
                snapshot_id: None,
                error: None,
            };
            match res {
                Ok(snap) => {
                    rec.status = Some(snap.status.clone());
                    if snap.status.is_success() {
                        let id = store_snapshot(&corpus, &snap)
                            .map_err(|e| stage_err(Stage::Fetch)(&e))?;
                        rec.snapshot_id = Some(id);
                        live.push((cand, snap));
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            records.push(rec);
        }
        self.counts.fetched_ok = live.len();
        write_ndjson(&self.path("fetch.ndjson"), &records)?;
        Ok(live)
    }

    fn analyze(
        &mut self,
        registry: &CollectionRegistry,
        live: &[(CandidateDomain, SiteSnapshot)],
    ) -> Result<Vec<SiteAnalysis>, PipelineError> {
        let min = self.cfg.analysis.min_contracts;
        let out: Vec<SiteAnalysis> = live
            .par_iter()
            .map(|(c, s)| analyze(s, registry, c.seed.as_deref(), min))
            .collect();
        self.counts.analyzed = out.len();
        write_ndjson(&self.path("analysis.ndjson"), &out)?;
        Ok(out)
    }

    fn features(
        &mut self,
        registry: &CollectionRegistry,
        live: &[(CandidateDomain, SiteSnapshot)],
        analyses: &[SiteAnalysis],
    ) -> Result<Vec<MatrixRow>, PipelineError> {
        let err = stage_err(Stage::Features);
        let accounts = match &self.cfg.features.accounts {
            Some(p) => CsvAccountProvider::load(p, self.cfg.as_of).map_err(|e| err(&e))?,
            None => CsvAccountProvider::default(),
        };
        let names = match &self.cfg.features.contract_names {
            Some(p) => CsvNameProvider::load(p).map_err(|e| err(&e))?,
            None => CsvNameProvider::default(),
        };
        let fc = FeatureConfig {
            disable_f5: self.cfg.features.disable_f5,
        };
        let rows: Vec<MatrixRow> = live
            .iter()
            .zip(analyses)
            .map(|((_, s), a)| MatrixRow {
                snapshot_id: s.snapshot_id.clone(),
                features: extract_features(s, a, registry, &accounts, &names, &fc),
            })
            .collect();
        let p = self.path("features.csv");
        write_matrix(File::create(&p).map_err(io(&p))?, &rows).map_err(|e| err(&e))?;
        Ok(rows)
    }

    fn classify(
        &mut self,
        rows: &[MatrixRow],
        analyses: &[SiteAnalysis],
    ) -> Result<(), PipelineError> {
        let err = stage_err(Stage::Classify);
        let model = match (
            &self.cfg.classifier.model,
            &self.cfg.classifier.training_matrix,
        ) {
            (Some(m), _) => ForestModel::load(m).map_err(|e| err(&e))?,
            (None, Some(t)) => {
                let training = load_matrix(t).map_err(|e| err(&e))?;
                let data = Dataset::from_matrix(&training).map_err(|e| err(&e))?;
                let model = train(&data, &self.cfg.forest_params()).map_err(|e| err(&e))?;
                model.save(&self.path("model.json")).map_err(|e| err(&e))?;
                model
            }
            (None, None) => return Err(err(&"no model or training matrix configured")),
        };
        let p = self.path("verdicts.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| err(&e))?;
        if rows.is_empty() {
            w.write_record([
                "snapshot_id",
                "url",
                "phishing",
                "probability",
                "attack_vector",
            ])
            .map_err(|e| err(&e))?;
        }
        for (row, a) in rows.iter().zip(analyses) {
            let pred = model
                .predict(&row.features.to_array())
                .map_err(|e| err(&e))?;
            self.counts.phishing_verdicts += pred.phishing as usize;
            let attack = serde_json::to_value(a.attack.vector).expect("enum serializes");
            w.serialize(Verdict {
                snapshot_id: row.snapshot_id.clone(),
                url: a.url.clone(),
                phishing: pred.phishing,
                probability: pred.probability,
                attack_vector: attack.as_str().unwrap_or_default().to_string(),
            })
            .map_err(|e| err(&e))?;
        }
        w.flush().map_err(io(&p))
    }

    fn stages(&mut self) -> Result<(), PipelineError> {
        let registry =
            load_registry(&self.cfg.registry.path).map_err(|e| stage_err(Stage::Squat)(&e))?;
        let fuzzed = self.timed(Stage::Squat, |r| r.squat(&registry))?;
        let ct = self.timed(Stage::CtFilter, |r| r.ct_filter(&fuzzed))?;
        let candidates = self.timed(Stage::Dedupe, |r| r.dedupe(fuzzed, ct))?;
        let live = self.timed(Stage::Fetch, |r| r.fetch(&candidates))?;
        let analyses = self.timed(Stage::Analyze, |r| r.analyze(&registry, &live))?;
        let rows = self.timed(Stage::Features, |r| r.features(&registry, &live, &analyses))?;
        self.timed(Stage::Classify, |r| r.classify(&rows, &analyses))
    }
}

/// Runs every stage in order. On a stage failure the partial manifest is
/// still written (with `failed_stage` set) before the error is returned.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let started = Utc::now();
    prepare_output(&cfg.output_dir)?;
    let mut run = Run {
        cfg,
        out: cfg.output_dir.clone(),
        completed: Vec::new(),
        timings_ms: BTreeMap::new(),
        counts: RunCounts::default(),
    };
    match run.stages() {
        Ok(()) => {
            let manifest = run.finish(None, started)?;
            Ok(PipelineOutcome {
                manifest,
                counts: run.counts,
                output_dir: run.out,
            })
        }
        Err(e) => {
            let failed = match &e {
                PipelineError::Stage { stage, .. } => Some(*stage),
                _ => None,
            };
            if let Err(me) = run.finish(failed, started) {
                log::error!("could not write partial manifest: {me}");
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn minimal(dir: &Path) -> PipelineConfig {
        std::fs::write(
            dir.join("registry.csv"),
            "slug,name,official_domain,contract_address,twitter_handle,opensea_slug,sales_rank\n\
             apes,Apes,apesnft.io,0x00000000000000000000000000000000000000a1,apesnft,apes,1\n",
        )
        .unwrap();
        let mut train = String::from("snapshot_id,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,label\n");
        for i in 0..10 {
            let phish = i % 2 == 0;
            let (f1, f3) = if phish { (0, 8) } else { (1, 0) };
            train.push_str(&format!(
                "s{i},{f1},0,{f3},0,0,0,0,0,0,0,{}\n",
                if phish { "phishing" } else { "benign" }
            ));
        }
        std::fs::write(dir.join("train.csv"), train).unwrap();
        std::fs::create_dir_all(dir.join("sites")).unwrap();
        let mut c = parse_config(
            r#"
            seed = 3
            as_of = "2022-07-15T00:00:00Z"
            output_dir = "out"
            [registry]
            path = "registry.csv"
            [squat]
            rules = "omission"
            [fetch]
            fixture_root = "sites"
            [classifier]
            training_matrix = "train.csv"
            [classifier.forest]
            n_trees = 5
            "#,
        )
        .unwrap();
        c.rebase(dir);
        c.validate().unwrap();
        c
    }

    #[test]
    fn nothing_reachable_still_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal(dir.path());
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.counts.fuzzed, "apesnft".len());
        assert_eq!(out.counts.fetched_ok, 0);
        let verdicts = std::fs::read_to_string(cfg.output_dir.join("verdicts.csv")).unwrap();
        assert_eq!(verdicts.lines().count(), 1);
        let paths: Vec<&str> = out.manifest.files.iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"verdicts.csv") && paths.contains(&"model.json"));
        assert!(!paths.contains(&META_FILE));
        assert_eq!(out.manifest.stages_completed.len(), 7);
    }

    #[test]
    fn refuses_foreign_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal(dir.path());
        std::fs::create_dir_all(&cfg.output_dir).unwrap();
        std::fs::write(cfg.output_dir.join("precious.txt"), "keep").unwrap();
        assert!(matches!(
            run_pipeline(&cfg),
            Err(PipelineError::OutputDirInUse(_))
        ));
        assert!(cfg.output_dir.join("precious.txt").exists());
    }

    #[test]
    fn stage_failure_leaves_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal(dir.path());
        std::fs::write(dir.path().join("train.csv"), "not,a,matrix\n").unwrap();
        cfg.classifier.forest.n_trees = 1;
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(
            matches!(
                err,
                PipelineError::Stage {
                    stage: Stage::Classify,
                    ..
                }
            ),
            "{err}"
        );
        let m: Manifest = serde_json::from_str(
            &std::fs::read_to_string(cfg.output_dir.join(MANIFEST_FILE)).unwrap(),
        )
        .unwrap();
        assert_eq!(m.failed_stage, Some(Stage::Classify));
        assert_eq!(m.stages_completed.len(), 6);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal(dir.path());
        run_pipeline(&cfg).unwrap();
        let first = std::fs::read(cfg.output_dir.join(MANIFEST_FILE)).unwrap();
        run_pipeline(&cfg).unwrap();
        assert_eq!(
            std::fs::read(cfg.output_dir.join(MANIFEST_FILE)).unwrap(),
            first
        );
    }
}
