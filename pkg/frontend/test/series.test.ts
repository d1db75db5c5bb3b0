import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as path from "node:path";
import { test } from "node:test";

import { parseCsv } from "../src/csv";
import { checkOverlayDominates } from "../src/overlay";
import { groupSeries, readOverlay, runningMean } from "../src/series";

const FIXTURES = path.join(__dirname, "..", "..", "fixtures");

function fixture(name: string) {
  return parseCsv(fs.readFileSync(path.join(FIXTURES, name), "utf-8"));
}

test("running mean is the prefix average", () => {
  assert.deepEqual(runningMean([2, 4, 6]), [2, 3, 4]);
  assert.deepEqual(runningMean([]), []);
});

test("strategy comparison groups come out in CSV order", () => {
  const bands = groupSeries(fixture("compare_aggregates.csv"), "train_loss");
  assert.equal(bands.length, 3);
  assert.deepEqual(
    bands.map((b) => b.label.split(" ")[0]),
    ["strategy=ig", "strategy=rr", "strategy=so"],
  );
  for (const b of bands) {
    assert.equal(b.epochs.length, 30);
    assert.deepEqual(
      b.epochs,
      Array.from({ length: 30 }, (_, i) => i + 1),
    );
  }
});

test("metric column must exist", () => {
  assert.throws(
    () => groupSeries(fixture("compare_aggregates.csv"), "zz" as never),
    /missing column zz_mean/,
  );
});

test("start epoch trims leading rows", () => {
  const bands = groupSeries(fixture("compare_aggregates.csv"), "train_loss", undefined, 5);
  assert.equal(bands[0].epochs[0], 5);
});

test("groups with entirely empty metric are dropped", () => {
  // the quadratic fixtures have no test set, so accuracy is empty
  const bands = groupSeries(fixture("compare_aggregates.csv"), "test_accuracy");
  assert.equal(bands.length, 0);
});

test("certificate overlay sits above the running mean everywhere", () => {
  // the audit fixtures are the deciding check: an average-type certificate
  // must dominate the prefix mean of the empirical curve at every epoch
  const bands = groupSeries(fixture("audit_aggregates.csv"), "grad_norm_sq");
  assert.equal(bands.length, 1);
  const overlay = readOverlay(fixture("audit_bounds.csv"));
  assert.equal(overlay.target, "avg_grad_norm_sq");
  const violations = checkOverlayDominates(bands[0], overlay);
  assert.deepEqual(violations, []);
});

test("violations are reported when the certificate is scaled down", () => {
  const bands = groupSeries(fixture("audit_aggregates.csv"), "grad_norm_sq");
  const overlay = readOverlay(fixture("audit_bounds.csv"));
  const shrunk = { ...overlay, total: overlay.total.map((v) => v / 1e7) };
  const violations = checkOverlayDominates(bands[0], shrunk);
  assert.ok(violations.length > 0);
  assert.ok(violations[0].bound < violations[0].empirical);
});

test("pointwise targets compare without averaging", () => {
  const band = { label: "x", epochs: [1, 2], mean: [5, 1], std: [0, 0] };
  const overlay = { epochs: [1, 2], total: [4, 2], target: "f_gap" };
  const violations = checkOverlayDominates(band, overlay);
  assert.equal(violations.length, 1);
  assert.equal(violations[0].epoch, 1);
});
