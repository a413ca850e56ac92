/**
 * Trace CSV parsing and per-scheme aggregation.
 *
 * The input schema is the sampler's trace contract:
 *   scheme,seed,t_ms,samples,rejected,mse,unresolved
 *
 * Seeds are aligned by sample count (wall time jitters between runs), and
 * unresolved checkpoints are dropped from averages but counted so figures can
 * annotate how much was excluded.
 */

export interface TraceRow {
  scheme: string;
  seed: number;
  tMs: number;
  samples: number;
  rejected: number;
  mse: number | null;
  unresolved: boolean;
}

export const TRACE_HEADER = "scheme,seed,t_ms,samples,rejected,mse,unresolved";

export class SchemaError extends Error {}

export function parseTrace(text: string, source = "<trace>"): TraceRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0 || lines[0] !== TRACE_HEADER) {
    throw new SchemaError(
      `${source}: expected header '${TRACE_HEADER}', got '${lines[0] ?? ""}'`
    );
  }
  const rows: TraceRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== 7) {
      throw new SchemaError(`${source}:${i + 1}: expected 7 fields, got ${parts.length}`);
    }
    const [scheme, seed, tMs, samples, rejected, mse, unresolved] = parts;
    const row: TraceRow = {
      scheme,
      seed: Number(seed),
      tMs: Number(tMs),
      samples: Number(samples),
      rejected: Number(rejected),
      mse: mse === "" ? null : Number(mse),
      unresolved: unresolved === "1",
    };
    if (
      !Number.isFinite(row.seed) ||
      !Number.isFinite(row.tMs) ||
      !Number.isFinite(row.samples) ||
      !Number.isFinite(row.rejected) ||
      (row.mse !== null && !Number.isFinite(row.mse)) ||
      (unresolved !== "0" && unresolved !== "1")
    ) {
      throw new SchemaError(`${source}:${i + 1}: malformed numeric field`);
    }
    rows.push(row);
  }
  return rows;
}

export interface Series {
  label: string;
  points: { x: number; y: number }[]; // sorted by x
  dropped: number; // unresolved/undefined checkpoints excluded from averages
}

function bySchemes(rows: TraceRow[]): Map<string, TraceRow[]> {
  const m = new Map<string, TraceRow[]>();
  for (const r of rows) {
    const list = m.get(r.scheme);
    if (list) list.push(r);
    else m.set(r.scheme, [r]);
  }
  return new Map([...m.entries()].sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0)));
}

function mean(xs: number[]): number {
  let s = 0;
  for (const x of xs) s += x;
  return s / xs.length;
}

/** MSE against mean wall time, seeds aligned by sample count. */
export function mseVsTimeSeries(rows: TraceRow[]): Series[] {
  const out: Series[] = [];
  for (const [scheme, rs] of bySchemes(rows)) {
    const groups = new Map<number, TraceRow[]>();
    for (const r of rs) {
      const g = groups.get(r.samples);
      if (g) g.push(r);
      else groups.set(r.samples, [r]);
    }
    const points: { x: number; y: number }[] = [];
    let dropped = 0;
    for (const [, g] of [...groups.entries()].sort(([a], [b]) => a - b)) {
      const ok = g.filter((r) => !r.unresolved && r.mse !== null);
      dropped += g.length - ok.length;
      if (ok.length === 0) continue;
      points.push({ x: mean(ok.map((r) => r.tMs)), y: mean(ok.map((r) => r.mse as number)) });
    }
    points.sort((a, b) => a.x - b.x);
    out.push({ label: scheme, points, dropped });
  }
  return out;
}

/** Rejected fraction against sample count, averaged across seeds. */
export function rejectionVsSamplesSeries(rows: TraceRow[]): Series[] {
  const out: Series[] = [];
  for (const [scheme, rs] of bySchemes(rows)) {
    const groups = new Map<number, number[]>();
    let dropped = 0;
    for (const r of rs) {
      if (r.samples <= 0) {
        dropped += 1;
        continue;
      }
      const rate = r.rejected / r.samples;
      const g = groups.get(r.samples);
      if (g) g.push(rate);
      else groups.set(r.samples, [rate]);
    }
    const points = [...groups.entries()]
      .sort(([a], [b]) => a - b)
      .map(([samples, rates]) => ({ x: samples, y: mean(rates) }));
    out.push({ label: scheme, points, dropped });
  }
  return out;
}
