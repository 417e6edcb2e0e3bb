import { strict as assert } from "assert";
import { test } from "node:test";

import { tokenize } from "./tokenize";

test("plain words split on whitespace", () => {
  assert.deepEqual(tokenize("Read system log files"), ["Read", "system", "log", "files"]);
});

test("edge punctuation peels off", () => {
  assert.deepEqual(tokenize("send dumps (heap snapshots), then stop."), [
    "send", "dumps", "(", "heap", "snapshots", ")", ",", "then", "stop", ".",
  ]);
});

test("identifiers and paths survive whole", () => {
  assert.deepEqual(tokenize("label /dev/video0 as hal_wifi no-dac-override"), [
    "label", "/dev/video0", "as", "hal_wifi", "no-dac-override",
  ]);
});

test("blank and whitespace-only input yields nothing", () => {
  assert.deepEqual(tokenize(""), []);
  assert.deepEqual(tokenize("   "), []);
});

test("lone punctuation tokens pass through", () => {
  assert.deepEqual(tokenize("wait ; retry"), ["wait", ";", "retry"]);
});
