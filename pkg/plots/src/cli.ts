/** Shared argument handling for the two plot scripts. */

import { readFileSync, writeFileSync } from "fs";

import { parseTrace, SchemaError, TraceRow } from "./trace";

export interface CliArgs {
  inputs: string[];
  out: string;
  logY: boolean;
  title?: string;
}

export function parseArgs(argv: string[], usage: string): CliArgs {
  const inputs: string[] = [];
  let out: string | undefined;
  let logY = false;
  let title: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--out") out = argv[++i];
    else if (a === "--logy") logY = true;
    else if (a === "--title") title = argv[++i];
    else if (a === "--help" || a === "-h") {
      process.stdout.write(usage + "\n");
      process.exit(0);
    } else if (a.startsWith("--")) {
      process.stderr.write(`unknown option ${a}\n${usage}\n`);
      process.exit(2);
    } else inputs.push(a);
  }
  if (inputs.length === 0 || !out) {
    process.stderr.write(usage + "\n");
    process.exit(2);
  }
  return { inputs, out, logY, title };
}

export function loadRows(paths: string[]): TraceRow[] {
  const rows: TraceRow[] = [];
  for (const p of paths) {
    rows.push(...parseTrace(readFileSync(p, "utf8"), p));
  }
  return rows;
}

export function runPlot(argv: string[], usage: string, make: (rows: TraceRow[], args: CliArgs) => string): void {
  const args = parseArgs(argv, usage);
  let svg: string;
  try {
    svg = make(loadRows(args.inputs), args);
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`schema error: ${err.message}\n`);
      process.exit(1);
    }
    throw err;
  }
  if (svg.includes("no drawable points")) {
    process.stderr.write("warning: no drawable points; figure is empty\n");
  }
  writeFileSync(args.out, svg);
}
