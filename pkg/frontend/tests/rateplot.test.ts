import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { readCsv, columnIndex } from "../src/csv.js";
import { renderRatePlot } from "../src/rateplot.js";

const RATES_CSV = new URL("../fixtures/rates/rates.csv", import.meta.url).pathname;

function outDir(): string {
  return mkdtempSync(join(tmpdir(), "plots-"));
}

describe("rate plot on the oracle decay study", () => {
  it("reference slope equals the csv slope_target exactly", () => {
    const res = renderRatePlot(RATES_CSV, join(outDir(), "rates.png"));
    const table = readCsv(RATES_CSV);
    const mIdx = columnIndex(table, "measure");
    const sIdx = columnIndex(table, "slope_target");
    for (const row of table.rows) {
      expect(res.measures[row[mIdx]].slopeTarget).toBe(Number(row[sIdx]));
    }
  });

  it("fitted slopes are negative and close to targets", () => {
    const res = renderRatePlot(RATES_CSV, join(outDir(), "rates.png"));
    for (const name of ["fdr_x", "fnr_x"]) {
      const m = res.measures[name];
      expect(m.fittedSlope).not.toBeNull();
      expect(m.fittedSlope!).toBeLessThan(0);
      expect(Math.abs(m.fittedSlope! - m.slopeTarget) / Math.abs(m.slopeTarget)).toBeLessThan(0.2);
    }
  });

  it("writes a real png and svg pair", () => {
    const out = join(outDir(), "rates.png");
    renderRatePlot(RATES_CSV, out);
    const png = readFileSync(out);
    expect(png.subarray(0, 8)).toEqual(
      Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    );
    expect(readFileSync(out.replace(/\.png$/, ".svg"), "utf8")).toContain("dashed");
  });

  it("exact synthetic exponential input: fitted equals reference", () => {
    const dir = outDir();
    const path = join(dir, "exact.csv");
    const rows = [50, 100, 200, 400]
      .map((n) => `${n},fdr_x,${Math.exp(-0.2 * n)},-0.2`)
      .join("\n");
    writeFileSync(path, `# v1\nn,measure,mean_error,slope_target\n${rows}\n`);
    const res = renderRatePlot(path, join(dir, "exact.png"));
    expect(res.measures.fdr_x.fittedSlope!).toBeCloseTo(-0.2, 9);
    expect(res.measures.fdr_x.slopeTarget).toBe(-0.2);
  });

  it("zero errors are dropped from the fit but counted", () => {
    const dir = outDir();
    const path = join(dir, "zeros.csv");
    writeFileSync(
      path,
      "# v1\nn,measure,mean_error,slope_target\n" +
        "50,fnr_x,0.1,-0.3\n100,fnr_x,0.0,-0.3\n200,fnr_x,0.001,-0.3\n",
    );
    const res = renderRatePlot(path, join(dir, "z.png"));
    expect(res.measures.fnr_x.nPositive).toBe(2);
    expect(res.measures.fnr_x.nDropped).toBe(1);
  });

  it("no positive errors yields an explanatory placeholder", () => {
    const dir = outDir();
    const path = join(dir, "allzero.csv");
    writeFileSync(
      path,
      "# v1\nn,measure,mean_error,slope_target\n50,fdr_x,0.0,-0.3\n100,fdr_x,0.0,-0.3\n",
    );
    const res = renderRatePlot(path, join(dir, "p.png"));
    expect(res.placeholder).toBe(true);
    expect(readFileSync(join(dir, "p.svg"), "utf8")).toContain("no positive mean errors");
  });

  it("empty input yields a placeholder too", () => {
    const dir = outDir();
    const path = join(dir, "empty.csv");
    writeFileSync(path, "# v1\n");
    const res = renderRatePlot(path, join(dir, "e.png"));
    expect(res.placeholder).toBe(true);
  });
});
