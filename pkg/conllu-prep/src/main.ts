#!/usr/bin/env node

import * as fs from "fs";

import { convert } from "./conllu";

function usage(): never {
  process.stderr.write("usage: conllu-prep --in FILE --out FILE\n");
  process.exit(2);
}

export function main(argv: string[]): number {
  let input: string | undefined;
  let output: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--in") input = argv[++i];
    else if (argv[i] === "--out") output = argv[++i];
    else usage();
  }
  if (!input || !output) usage();
  let text: string;
  try {
    text = fs.readFileSync(input, "utf-8");
  } catch (err) {
    process.stderr.write(`conllu-prep: cannot read ${input}: ${(err as Error).message}\n`);
    return 1;
  }
  fs.writeFileSync(output, convert(text));
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
