export { renderBoxplot, collectCells, METRICS } from "./boxplot.js";
export { renderRatePlot } from "./rateplot.js";
export { parseCsv, readCsv, columnIndex, numericColumn } from "./csv.js";
export { median, mean, quantile, boxStats, olsFit } from "./stats.js";
