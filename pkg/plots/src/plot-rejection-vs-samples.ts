#!/usr/bin/env node
/**
 * Rejection rate (rejected/samples) against sample count, averaged over seeds.
 *
 * Usage: plot-rejection-vs-samples <trace.csv> [more.csv ...] --out figure.svg [--logy] [--title T]
 */

import { rejectionVsSamplesSeries } from "./trace";
import { renderPlot } from "./svg";
import { runPlot } from "./cli";

const USAGE =
  "usage: plot-rejection-vs-samples <trace.csv> [more.csv ...] --out figure.svg [--logy] [--title T]";

runPlot(process.argv.slice(2), USAGE, (rows, args) =>
  renderPlot(rejectionVsSamplesSeries(rows), {
    title: args.title ?? "Rejection rate vs samples",
    xLabel: "samples",
    yLabel: "rejection rate",
    logY: args.logY,
  })
);
