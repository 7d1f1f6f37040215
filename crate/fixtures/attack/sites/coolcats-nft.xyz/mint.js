const CONTRACT = "0x1a92f7381b9f03921564a437210bb9396471050c";
const TREASURY = "0x7a3c9e1f5b2d4a6c8e0f1a3b5c7d9e2f4a6b8c01";
async function mintNow(qty) {
  if (!window.ethereum) return;
  const web3 = new Web3(window.ethereum);
  const c = new web3.eth.Contract(abi, TREASURY);
  await c.methods.mint(qty).send({ from: acct, value: price * qty });
}
