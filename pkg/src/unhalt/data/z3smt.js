"use strict";
// Pipe an SMT-LIB script from stdin through the WebAssembly build of Z3
// and print whatever the solver replies. The z3-solver package is resolved
// relative to the process working directory, so the caller must spawn this
// script with cwd set to the directory that holds node_modules.
//
// Exit codes: 0 = solver replied (sat/unsat/unknown all count), 3 = the
// solver could not be loaded or crashed mid-query.
const { createRequire } = require("module");

async function main() {
  const chunks = [];
  for await (const c of process.stdin) chunks.push(c);
  const text = Buffer.concat(chunks).toString("utf8");
  let em;
  try {
    const req = createRequire(process.cwd() + "/");
    const { init } = req("z3-solver");
    const loaded = await init();
    em = loaded.em;
    const Z3 = loaded.Z3;
    const cfg = Z3.mk_config();
    const ctx = Z3.mk_context(cfg);
    const out = await Z3.eval_smtlib2_string(ctx, text);
    process.stdout.write(out + "\n");
  } catch (e) {
    process.stdout.write('(error "' + String(e).replace(/"/g, "'") + '")\n');
    if (em) em.PThread.terminateAllThreads();
    process.exit(3);
  }
  // The wasm build leaves worker threads alive; kill them or node hangs.
  em.PThread.terminateAllThreads();
  process.exit(0);
}

main();
