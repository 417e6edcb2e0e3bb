/** One sentence in, one validated dependency-parse row list out. */

import { Tag } from "en-pos";
import * as enParse from "en-parse";
import * as lemmatizer from "wink-lemmatizer";

import { tokenize } from "./tokenize";
import { toDeprel, toUpos } from "./tagmap";

export interface DepRow {
  id: number; // 1-based
  form: string;
  lemma: string;
  upos: string;
  xpos: string; // the Penn tag the parser saw
  head: number; // 0 = root
  deprel: string;
}

function lemmaOf(form: string, upos: string): string {
  const lower = form.toLowerCase();
  switch (upos) {
    case "NOUN":
    case "PROPN":
      return lemmatizer.noun(lower);
    case "VERB":
    case "AUX":
      return lemmatizer.verb(lower);
    case "ADJ":
      return lemmatizer.adjective(lower);
    default:
      return lower;
  }
}

export function parseSentence(sentence: string): DepRow[] {
  const tokens = tokenize(sentence);
  if (tokens.length === 0) return [];
  const tags: string[] = new Tag(tokens).initial().smooth().tags;
  const nodes = enParse.parse(tags, tokens);

  const rows: DepRow[] = tokens.map((form, i) => {
    const node = nodes[i];
    const upos = toUpos(tags[i]);
    return {
      id: i + 1,
      form,
      lemma: lemmaOf(form, upos),
      upos,
      xpos: tags[i],
      head: node ? node.parent + 1 : 0,
      deprel: node ? toDeprel(node.label, node.parent === -1) : "dep",
    };
  });
  return repairTree(rows);
}

/**
 * Enforce the structural invariants every emitted block must satisfy:
 * heads within [0, n], exactly one root, no self-loops, no cycles. The
 * parser almost always delivers this already; anything off gets reattached
 * to the first root as a plain `dep`.
 */
export function repairTree(rows: DepRow[]): DepRow[] {
  const n = rows.length;
  for (const row of rows) {
    if (row.head < 0 || row.head > n || row.head === row.id) {
      row.head = 0;
      row.deprel = "root";
    }
  }
  let rootId = 0;
  for (const row of rows) {
    if (row.head === 0) {
      if (rootId === 0) {
        rootId = row.id;
        row.deprel = "root";
      } else {
        row.head = rootId;
        row.deprel = "dep";
      }
    }
  }
  if (rootId === 0) {
    rows[0].head = 0;
    rows[0].deprel = "root";
    rootId = rows[0].id;
  }
  // Break any cycle by rerooting the smallest node on it.
  for (const row of rows) {
    const seen = new Set<number>([row.id]);
    let cursor = row.head;
    while (cursor !== 0) {
      if (seen.has(cursor)) {
        row.head = rootId === row.id ? 0 : rootId;
        row.deprel = rootId === row.id ? "root" : "dep";
        break;
      }
      seen.add(cursor);
      cursor = rows[cursor - 1].head;
    }
  }
  return rows;
}
