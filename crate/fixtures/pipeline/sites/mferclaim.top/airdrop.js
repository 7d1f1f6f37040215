const receiver = "0xc3d5e7f9a1b3c5d7e9f1a3b5c7d9e1f3a5b7c9d2";
if (window.ethereum) {
  signer.sendTransaction({ to: receiver, value: ethers.utils.parseEther("0.05") });
}
