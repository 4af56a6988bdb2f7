/** Log mean error against sample size with the fitted and theoretical decay lines. */

import { readCsv, columnIndex } from "./csv.js";
import { olsFit } from "./stats.js";
import { Scene, writeImage, ticks } from "./svg.js";

const PANEL_COLORS: Record<string, string> = {
  fdr_x: "#2166ac",
  mfdr_x: "#92c5de",
  fnr_x: "#b2182b",
  mfnr_x: "#f4a582",
};

export interface MeasureFit {
  slopeTarget: number;
  fittedSlope: number | null;
  nPositive: number;
  nDropped: number;
}

export interface RatePlotResult {
  measures: Record<string, MeasureFit>;
  placeholder: boolean;
  png: string;
  svg: string;
}

export function renderRatePlot(csvPath: string, outPath: string): RatePlotResult {
  const table = readCsv(csvPath);
  const measures: Record<string, MeasureFit> = {};
  const series = new Map<string, { n: number[]; logErr: number[]; dropped: number }>();

  if (table.columns.length > 0) {
    const nIdx = columnIndex(table, "n");
    const mIdx = columnIndex(table, "measure");
    const eIdx = columnIndex(table, "mean_error");
    const sIdx = columnIndex(table, "slope_target");
    for (const row of table.rows) {
      const name = row[mIdx];
      const entry = series.get(name) ?? { n: [], logErr: [], dropped: 0 };
      const err = Number(row[eIdx]);
      if (err > 0) {
        entry.n.push(Number(row[nIdx]));
        entry.logErr.push(Math.log(err));
      } else {
        entry.dropped += 1;
      }
      series.set(name, entry);
      if (!(name in measures)) {
        measures[name] = {
          slopeTarget: Number(row[sIdx]),
          fittedSlope: null,
          nPositive: 0,
          nDropped: 0,
        };
      }
    }
  }

  for (const [name, entry] of series) {
    measures[name].nPositive = entry.n.length;
    measures[name].nDropped = entry.dropped;
    if (entry.n.length >= 2) {
      measures[name].fittedSlope = olsFit(entry.n, entry.logErr).slope;
    }
  }

  const drawable = [...series.entries()].filter(([, e]) => e.n.length >= 1);
  if (drawable.length === 0) {
    // no positive errors anywhere: explanatory placeholder, still a valid image
    const scene = new Scene(720, 200);
    scene.text(360, 90, "no positive mean errors to plot", 16, "middle");
    scene.text(360, 115, `input: ${csvPath}`, 11, "middle", "#666");
    const out = writeImage(scene, outPath);
    return { measures, placeholder: true, png: out.png, svg: out.svg };
  }

  const width = 720;
  const height = 440;
  const margin = { left: 64, right: 20, top: 40, bottom: 48 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const scene = new Scene(width, height);

  const allN = drawable.flatMap(([, e]) => e.n);
  const allY = drawable.flatMap(([, e]) => e.logErr);
  const nLo = Math.min(...allN);
  const nHi = Math.max(...allN);
  let yLo = Math.min(...allY);
  let yHi = Math.max(...allY);
  if (yLo === yHi) {
    yLo -= 1;
    yHi += 1;
  }
  const padY = 0.06 * (yHi - yLo);
  yLo -= padY;
  yHi += padY;
  const xOf = (n: number) => margin.left + (plotW * (n - nLo)) / Math.max(nHi - nLo, 1);
  const yOf = (v: number) => margin.top + plotH * (1 - (v - yLo) / (yHi - yLo));

  scene.line(margin.left, margin.top, margin.left, margin.top + plotH, "#444");
  scene.line(margin.left, margin.top + plotH, margin.left + plotW, margin.top + plotH, "#444");
  for (const t of ticks(yLo + padY, yHi - padY)) {
    scene.line(margin.left - 4, yOf(t), margin.left, yOf(t), "#444");
    scene.text(margin.left - 8, yOf(t) + 4, t.toFixed(1), 10, "end");
  }
  for (const t of ticks(nLo, nHi)) {
    scene.line(xOf(t), margin.top + plotH, xOf(t), margin.top + plotH + 4, "#444");
    scene.text(xOf(t), margin.top + plotH + 16, String(Math.round(t)), 10, "middle");
  }
  scene.text(16, margin.top + plotH / 2, "log mean error", 12, "middle");
  scene.text(width / 2, height - 10, "sample size", 12, "middle");
  scene.text(width / 2, 20, "posterior error decay with theoretical slopes (dashed)", 13, "middle");

  let legendX = margin.left + 4;
  for (const [name, entry] of drawable) {
    const color = PANEL_COLORS[name] ?? "#555";
    for (let i = 0; i < entry.n.length; i++) {
      scene.circle(xOf(entry.n[i]), yOf(entry.logErr[i]), 3, color);
    }
    const fit = measures[name];
    if (entry.n.length >= 2 && fit.fittedSlope !== null) {
      const { slope, intercept } = olsFit(entry.n, entry.logErr);
      scene.line(xOf(nLo), yOf(slope * nLo + intercept), xOf(nHi), yOf(slope * nHi + intercept), color, 1.4);
      // dashed reference with the theoretical slope, anchored at the first point
      const anchorN = entry.n[0];
      const anchorY = entry.logErr[0];
      const ref = (n: number) => anchorY + fit.slopeTarget * (n - anchorN);
      scene.line(xOf(nLo), yOf(ref(nLo)), xOf(nHi), yOf(ref(nHi)), color, 1.2, "6 4");
    }
    scene.text(legendX, 32, `${name} (target ${fit.slopeTarget})`, 10, "start", PANEL_COLORS[name] ?? "#555");
    legendX += 170;
  }

  const out = writeImage(scene, outPath);
  return { measures, placeholder: false, png: out.png, svg: out.svg };
}
