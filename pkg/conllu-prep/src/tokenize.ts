/**
 * Rule tokenizer for policy comment text. Splits on whitespace, then peels
 * sentence punctuation off token edges. Identifiers like `hal_wifi`,
 * `/dev/video0` or `no-dac-override` survive as single tokens.
 */

const EDGE_PUNCT = /^[("'`\[]+|[)"'`\],.!?;:]+$/g;
const LONE_PUNCT = /^[(),.!?;:"'`\[\]]$/;

export function tokenize(sentence: string): string[] {
  const out: string[] = [];
  for (const raw of sentence.split(/\s+/)) {
    if (!raw) continue;
    if (LONE_PUNCT.test(raw)) {
      out.push(raw);
      continue;
    }
    const core = raw.replace(EDGE_PUNCT, "");
    if (!core) {
      for (const ch of raw) out.push(ch);
      continue;
    }
    const at = raw.indexOf(core);
    for (const ch of raw.slice(0, at)) out.push(ch);
    out.push(core);
    for (const ch of raw.slice(at + core.length)) out.push(ch);
  }
  return out;
}
