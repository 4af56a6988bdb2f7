import { describe, expect, it } from "vitest";

import { boxStats, median, mean, olsFit, quantile } from "../src/stats.js";

describe("median", () => {
  it("odd count picks the middle order statistic", () => {
    expect(median([3, 1, 2])).toBe(2);
  });

  it("even count averages the middle two", () => {
    expect(median([4, 1, 3, 2])).toBe(2.5);
  });

  it("rejects empty input", () => {
    expect(() => median([])).toThrow();
  });
});

describe("quantile", () => {
  it("interpolates linearly", () => {
    expect(quantile([0, 1, 2, 3], 0.5)).toBeCloseTo(1.5, 12);
    expect(quantile([0, 10], 0.25)).toBeCloseTo(2.5, 12);
  });

  it("endpoints are the extremes", () => {
    expect(quantile([5, 1, 9], 0)).toBe(1);
    expect(quantile([5, 1, 9], 1)).toBe(9);
  });
});

describe("boxStats", () => {
  it("whiskers clamp to data within the 1.5 IQR fences", () => {
    const s = boxStats([1, 2, 3, 4, 100]);
    expect(s.whiskerLow).toBe(1);
    expect(s.whiskerHigh).toBe(4);
    expect(s.outliers).toEqual([100]);
  });

  it("single observation degenerates to the point", () => {
    const s = boxStats([7]);
    expect(s.median).toBe(7);
    expect(s.q1).toBe(7);
    expect(s.q3).toBe(7);
    expect(s.count).toBe(1);
  });
});

describe("olsFit", () => {
  it("recovers an exact line", () => {
    const xs = [1, 2, 3, 4];
    const ys = xs.map((x) => -0.2 * x + 3);
    const fit = olsFit(xs, ys);
    expect(fit.slope).toBeCloseTo(-0.2, 12);
    expect(fit.intercept).toBeCloseTo(3, 12);
    expect(fit.rSquared).toBeCloseTo(1, 12);
  });

  it("scale shifts only move the intercept", () => {
    const xs = [10, 20, 40, 80];
    const ys = xs.map((x) => -0.05 * x + Math.log(7));
    expect(olsFit(xs, ys).slope).toBeCloseTo(-0.05, 12);
  });

  it("mean helper averages", () => {
    expect(mean([1, 2, 3])).toBe(2);
  });
});
