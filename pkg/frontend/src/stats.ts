/** Summary statistics recomputed from raw replicate rows.
 *
 * Median matches the harness convention (mean of the two middle order
 * statistics for even counts) so the cross-check against summary.json holds
 * to floating-point accuracy.
 */

export function median(values: number[]): number {
  if (values.length === 0) {
    throw new Error("median of an empty sample");
  }
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 === 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export function mean(values: number[]): number {
  if (values.length === 0) {
    throw new Error("mean of an empty sample");
  }
  return values.reduce((acc, v) => acc + v, 0) / values.length;
}

/** Linear-interpolation quantile (the plotting convention for box edges). */
export function quantile(values: number[], q: number): number {
  if (values.length === 0) {
    throw new Error("quantile of an empty sample");
  }
  const sorted = [...values].sort((a, b) => a - b);
  const pos = q * (sorted.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  if (lo === hi) {
    return sorted[lo];
  }
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

export interface BoxStats {
  count: number;
  median: number;
  mean: number;
  q1: number;
  q3: number;
  whiskerLow: number;
  whiskerHigh: number;
  outliers: number[];
}

/** Tukey box statistics: whiskers at the last data point within 1.5 IQR. */
export function boxStats(values: number[]): BoxStats {
  const q1 = quantile(values, 0.25);
  const q3 = quantile(values, 0.75);
  const iqr = q3 - q1;
  const loFence = q1 - 1.5 * iqr;
  const hiFence = q3 + 1.5 * iqr;
  const inside = values.filter((v) => v >= loFence && v <= hiFence);
  const whiskerLow = inside.length ? Math.min(...inside) : q1;
  const whiskerHigh = inside.length ? Math.max(...inside) : q3;
  return {
    count: values.length,
    median: median(values),
    mean: mean(values),
    q1,
    q3,
    whiskerLow,
    whiskerHigh,
    outliers: values.filter((v) => v < loFence || v > hiFence),
  };
}

export interface LineFit {
  slope: number;
  intercept: number;
  rSquared: number;
}

/** Ordinary least squares of y on x. */
export function olsFit(xs: number[], ys: number[]): LineFit {
  if (xs.length !== ys.length || xs.length < 2) {
    throw new Error("need at least two (x, y) pairs");
  }
  const n = xs.length;
  const mx = mean(xs);
  const my = mean(ys);
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  const rSquared = syy === 0 ? 1 : (sxy * sxy) / (sxx * syy);
  return { slope, intercept, rSquared };
}
