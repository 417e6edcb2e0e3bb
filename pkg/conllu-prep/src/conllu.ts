/**
 * CoNLL-U rendering and the sentence-file layout.
 *
 * Input files carry one sentence per line; `## unit=<name>
 * polarity=<allow|neverallow>` header lines switch the current document and
 * are echoed into each following block as `# unit = ...` / `# polarity = ...`
 * comments.
 */

import { DepRow, parseSentence } from "./parse";

const HEADER = /^##\s*unit=(\S+)\s+polarity=(allow|neverallow)\s*$/;

export function renderBlock(rows: DepRow[], meta: Record<string, string>): string {
  const lines: string[] = [];
  for (const key of Object.keys(meta)) {
    lines.push(`# ${key} = ${meta[key]}`);
  }
  for (const r of rows) {
    lines.push(
      [r.id, r.form, r.lemma, r.upos, r.xpos, "_", r.head, r.deprel, "_", "_"].join("\t")
    );
  }
  return lines.join("\n") + "\n";
}

export function convert(text: string): string {
  const blocks: string[] = [];
  let unit = "unknown";
  let polarity = "allow";
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (!line) continue;
    const header = HEADER.exec(line);
    if (header) {
      unit = header[1];
      polarity = header[2];
      continue;
    }
    const rows = parseSentence(line);
    if (rows.length === 0) continue;
    blocks.push(renderBlock(rows, { unit, polarity, text: line }));
  }
  return blocks.length ? blocks.join("\n") + "\n" : "";
}
