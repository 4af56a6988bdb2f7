/** Grouped boxplots of one replicate metric: boxes grouped by sample size, colored by method. */

import { readCsv, columnIndex, Table } from "./csv.js";
import { BoxStats, boxStats } from "./stats.js";
import { Scene, writeImage, ticks } from "./svg.js";

export const METRICS = ["jaccard", "euclid", "ks", "fdr_x", "mfdr_x", "fnr_x", "mfnr_x"] as const;

const COLORS: Record<string, string> = {
  NMD: "#2166ac",
  MPR: "#b2182b",
  SZG: "#1a9850",
};
const FALLBACK_COLORS = ["#762a83", "#e08214", "#35978f"];

export interface BoxCell {
  method: string;
  n: number;
  metric: string;
  stats: BoxStats | null;
}

export interface BoxplotResult {
  cells: BoxCell[];
  warnings: string[];
  png: string;
  svg: string;
}

export function collectCells(table: Table, metric: string): { cells: BoxCell[]; warnings: string[] } {
  const mIdx = columnIndex(table, metric);
  const methodIdx = columnIndex(table, "method");
  const nIdx = columnIndex(table, "n");
  const groups = new Map<string, number[]>();
  const methods: string[] = [];
  const sizes: number[] = [];
  for (const row of table.rows) {
    const method = row[methodIdx];
    const n = Number(row[nIdx]);
    if (!methods.includes(method)) methods.push(method);
    if (!sizes.includes(n)) sizes.push(n);
    const key = `${method}@@${n}`;
    const bucket = groups.get(key) ?? [];
    bucket.push(Number(row[mIdx]));
    groups.set(key, bucket);
  }
  sizes.sort((a, b) => a - b);
  methods.sort();
  const cells: BoxCell[] = [];
  const warnings: string[] = [];
  for (const n of sizes) {
    for (const method of methods) {
      const bucket = groups.get(`${method}@@${n}`);
      if (!bucket || bucket.length === 0) {
        warnings.push(`empty cell: method=${method} n=${n}`);
        cells.push({ method, n, metric, stats: null });
      } else {
        cells.push({ method, n, metric, stats: boxStats(bucket) });
      }
    }
  }
  return { cells, warnings };
}

export function renderBoxplot(csvPath: string, metric: string, outPath: string): BoxplotResult {
  if (!(METRICS as readonly string[]).includes(metric)) {
    throw new Error(`unknown metric '${metric}'; choose one of ${METRICS.join(", ")}`);
  }
  const table = readCsv(csvPath);
  if (table.columns.length === 0) {
    throw new Error(`no data rows in ${csvPath}`);
  }
  const { cells, warnings } = collectCells(table, metric);
  const methods = [...new Set(cells.map((c) => c.method))];
  const sizes = [...new Set(cells.map((c) => c.n))].sort((a, b) => a - b);

  const width = 720;
  const height = 420;
  const margin = { left: 60, right: 20, top: 40, bottom: 48 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const scene = new Scene(width, height);

  const values = cells.flatMap((c) =>
    c.stats ? [c.stats.whiskerLow, c.stats.whiskerHigh, ...c.stats.outliers] : [],
  );
  let lo = values.length ? Math.min(...values) : 0;
  let hi = values.length ? Math.max(...values) : 1;
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.06 * (hi - lo);
  lo -= pad;
  hi += pad;
  const yOf = (v: number) => margin.top + plotH * (1 - (v - lo) / (hi - lo));

  // frame and y axis
  scene.line(margin.left, margin.top, margin.left, margin.top + plotH, "#444");
  scene.line(margin.left, margin.top + plotH, margin.left + plotW, margin.top + plotH, "#444");
  for (const t of ticks(lo + pad, hi - pad)) {
    scene.line(margin.left - 4, yOf(t), margin.left, yOf(t), "#444");
    scene.text(margin.left - 8, yOf(t) + 4, trim(t), 10, "end");
  }
  scene.text(14, margin.top + plotH / 2, metric, 12, "middle");
  scene.text(width / 2, height - 10, "sample size", 12, "middle");
  scene.text(width / 2, 20, `${metric} by sample size and method`, 13, "middle");

  const groupW = plotW / sizes.length;
  const boxW = Math.min(26, (groupW - 16) / Math.max(methods.length, 1));
  methods.forEach((method, mi) => {
    const color = COLORS[method] ?? FALLBACK_COLORS[mi % FALLBACK_COLORS.length];
    scene.rect(margin.left + 90 * mi + 6, 26, 10, 10, color);
    scene.text(margin.left + 90 * mi + 20, 35, method, 11);
  });

  sizes.forEach((n, gi) => {
    const gx = margin.left + gi * groupW + groupW / 2;
    scene.text(gx, margin.top + plotH + 16, String(n), 10, "middle");
    methods.forEach((method, mi) => {
      const cell = cells.find((c) => c.method === method && c.n === n);
      if (!cell || !cell.stats) {
        return; // absent cell: warned, not drawn
      }
      const s = cell.stats;
      const color = COLORS[method] ?? FALLBACK_COLORS[mi % FALLBACK_COLORS.length];
      const cx = gx + (mi - (methods.length - 1) / 2) * (boxW + 6);
      const x0 = cx - boxW / 2;
      if (s.count === 1) {
        // degenerate box: median line only
        scene.line(x0, yOf(s.median), x0 + boxW, yOf(s.median), color, 2);
        return;
      }
      scene.line(cx, yOf(s.whiskerLow), cx, yOf(s.q1), color);
      scene.line(cx, yOf(s.q3), cx, yOf(s.whiskerHigh), color);
      scene.line(cx - boxW / 4, yOf(s.whiskerLow), cx + boxW / 4, yOf(s.whiskerLow), color);
      scene.line(cx - boxW / 4, yOf(s.whiskerHigh), cx + boxW / 4, yOf(s.whiskerHigh), color);
      const top = yOf(s.q3);
      const bot = yOf(s.q1);
      scene.rect(x0, top, boxW, Math.max(bot - top, 0.75), "#ffffff", color);
      scene.line(x0, yOf(s.median), x0 + boxW, yOf(s.median), color, 2);
      for (const v of s.outliers) {
        scene.circle(cx, yOf(v), 1.7, color);
      }
    });
  });

  const out = writeImage(scene, outPath);
  return { cells, warnings, png: out.png, svg: out.svg };
}

function trim(v: number): string {
  const a = Math.abs(v);
  if (a !== 0 && (a < 1e-3 || a >= 1e5)) return v.toExponential(1);
  return String(Math.round(v * 1000) / 1000);
}
