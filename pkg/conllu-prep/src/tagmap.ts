/** Penn Treebank tag to universal POS, and parser label normalization. */

const PENN_TO_UPOS: Record<string, string> = {
  CC: "CCONJ",
  CD: "NUM",
  DT: "DET",
  EX: "PRON",
  FW: "X",
  IN: "ADP",
  JJ: "ADJ",
  JJR: "ADJ",
  JJS: "ADJ",
  LS: "X",
  MD: "AUX",
  NN: "NOUN",
  NNS: "NOUN",
  NNP: "PROPN",
  NNPS: "PROPN",
  PDT: "DET",
  POS: "PART",
  PRP: "PRON",
  PRP$: "PRON",
  RB: "ADV",
  RBR: "ADV",
  RBS: "ADV",
  RP: "ADP",
  SYM: "SYM",
  TO: "PART",
  UH: "INTJ",
  VB: "VERB",
  VBD: "VERB",
  VBG: "VERB",
  VBN: "VERB",
  VBP: "VERB",
  VBZ: "VERB",
  WDT: "PRON",
  WP: "PRON",
  WP$: "PRON",
  WRB: "ADV",
};

export function toUpos(pennTag: string): string {
  if (pennTag in PENN_TO_UPOS) return PENN_TO_UPOS[pennTag];
  if (/^[^A-Za-z]+$/.test(pennTag)) return "PUNCT";
  return "X";
}

/**
 * The parser emits uppercase Stanford-style labels; downstream tooling reads
 * lowercase and understands both `dobj` and `obj` spellings, so labels pass
 * through lowercased with only the handful of aliases below rewritten.
 */
const LABEL_ALIASES: Record<string, string> = {
  nsubjpass: "nsubj:pass",
  auxpass: "aux:pass",
  csubjpass: "csubj:pass",
  nn: "compound",
  num: "nummod",
  prep: "case",
  pobj: "obl",
  attr: "xcomp",
  ext: "dep",
};

export function toDeprel(label: string, isRoot: boolean): string {
  if (isRoot) return "root";
  const lower = label.toLowerCase();
  return LABEL_ALIASES[lower] ?? lower;
}
