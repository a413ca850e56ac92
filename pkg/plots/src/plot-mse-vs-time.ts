#!/usr/bin/env node
/**
 * Mean squared error against wall time, one curve per sampling scheme.
 *
 * Usage: plot-mse-vs-time <trace.csv> [more.csv ...] --out figure.svg [--logy] [--title T]
 */

import { mseVsTimeSeries } from "./trace";
import { renderPlot } from "./svg";
import { runPlot } from "./cli";

const USAGE =
  "usage: plot-mse-vs-time <trace.csv> [more.csv ...] --out figure.svg [--logy] [--title T]";

runPlot(process.argv.slice(2), USAGE, (rows, args) =>
  renderPlot(mseVsTimeSeries(rows), {
    title: args.title ?? "MSE vs time",
    xLabel: "time (ms)",
    yLabel: "MSE",
    logY: args.logY,
  })
);
