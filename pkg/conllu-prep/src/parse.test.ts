import { strict as assert } from "assert";
import { test } from "node:test";
import * as fs from "fs";
import * as path from "path";

import { DepRow, parseSentence, repairTree } from "./parse";

/** The structural contract every emitted block must meet. */
function assertValidTree(rows: DepRow[], label: string): void {
  assert.ok(rows.length > 0, `${label}: empty`);
  rows.forEach((row, i) => {
    assert.equal(row.id, i + 1, `${label}: ids must be 1-based and contiguous`);
    assert.ok(row.head >= 0 && row.head <= rows.length, `${label}: head out of range`);
    assert.notEqual(row.head, row.id, `${label}: self-loop`);
    assert.ok(row.form.length > 0 && row.lemma.length > 0, `${label}: empty form/lemma`);
  });
  const roots = rows.filter((r) => r.head === 0);
  assert.equal(roots.length, 1, `${label}: exactly one root required`);
  // Every token must reach the root without cycling.
  for (const row of rows) {
    const seen = new Set<number>();
    let cursor = row.id;
    while (cursor !== 0) {
      assert.ok(!seen.has(cursor), `${label}: cycle through ${cursor}`);
      seen.add(cursor);
      cursor = rows[cursor - 1].head;
    }
  }
}

test("walkthrough sentence parses to a single-rooted tree", () => {
  const rows = parseSentence("Allow apps to send dump information to dumpstate");
  assertValidTree(rows, "walkthrough");
  assert.equal(rows.length, 8);
  assert.equal(rows[0].upos, "VERB");
});

test("every fixture sentence yields a valid tree", () => {
  const text = fs.readFileSync(path.join(__dirname, "..", "fixtures", "sentences.txt"), "utf-8");
  for (const line of text.split("\n")) {
    const sentence = line.trim();
    if (!sentence || sentence.startsWith("##")) continue;
    assertValidTree(parseSentence(sentence), sentence);
  }
});

test("awkward inputs still satisfy the invariants", () => {
  const awkward = [
    "files",
    "dump data ; restart daemon",
    "Bug 123456 , see http://x.y for details .",
    "a b c d e f g h i j k l m n o p q r s t u v w x y z",
    "12345",
    "( )",
  ];
  for (const sentence of awkward) {
    assertValidTree(parseSentence(sentence), sentence);
  }
});

test("empty sentence gives no rows", () => {
  assert.deepEqual(parseSentence(""), []);
});

test("parsing is deterministic", () => {
  const once = parseSentence("Grant network sockets and shared memory to trusted daemons");
  const twice = parseSentence("Grant network sockets and shared memory to trusted daemons");
  assert.deepEqual(once, twice);
});

function row(id: number, head: number, deprel = "dep"): DepRow {
  return { id, form: `w${id}`, lemma: `w${id}`, upos: "NOUN", xpos: "NN", head, deprel };
}

test("repairTree reattaches extra roots", () => {
  const rows = repairTree([row(1, 0), row(2, 0), row(3, 1)]);
  assertValidTree(rows, "two roots");
  assert.equal(rows[1].head, 1);
});

test("repairTree fixes out-of-range heads and self-loops", () => {
  const rows = repairTree([row(1, 9), row(2, 2), row(3, 1)]);
  assertValidTree(rows, "broken heads");
});

test("repairTree breaks cycles", () => {
  const rows = repairTree([row(1, 0), row(2, 3), row(3, 2)]);
  assertValidTree(rows, "cycle");
});
