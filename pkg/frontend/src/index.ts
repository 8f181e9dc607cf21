/**
 * Bindings that expose the calibration-fairness auditor and post-processor
 * as plain functions over in-memory columnar tables.
 *
 * Nothing is reimplemented here: each call marshals the table to the CSV
 * schema the CLI ingests, invokes the CLI, and parses the artifacts it
 * writes back. Outputs are therefore identical to driving the command line
 * by hand, field for field and bit for bit.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { columnOf, parseCsv, serializeCsv } from "./csv.js";

export const version = "0.1.0";

/** Column-major table: column name to cell values (kept verbatim). */
export type Table = Record<string, Array<string | number>>;

export interface Schema {
  outcome: string;
  score: string;
  attrs: string[];
  pStar?: string;
}

export interface CommonParams {
  alpha?: number;
  lambda?: number;
  gamma?: number;
  rho?: number;
  bins?: "uniform" | "geometric";
  marginals?: boolean;
  seed?: number;
  /** Keep artifacts in this directory instead of a deleted temp dir. */
  workDir?: string;
  /** How to start the CLI; defaults to ["propcal"] or $PROPCAL_BIN. */
  command?: string[];
  env?: Record<string, string>;
}

export interface AuditParams extends CommonParams {
  exact?: boolean;
}

export interface PostprocessParams extends CommonParams {
  mode?: "pmc" | "mc";
  maxPasses?: number;
  split?: number;
  sampleFraction?: number;
}

/** Mirror of the report schema; field names match the JSON document. */
export interface ReportView {
  schema_version: string;
  tool_version: string;
  n: number;
  prevalence: number;
  groups: Array<Record<string, unknown>>;
  mc_loss: number | null;
  pmc_loss: number | null;
  dc_loss: number | null;
  auroc: number | null;
  witnesses: Array<Record<string, unknown>>;
  undefined: Record<string, string>;
  categories: Array<Record<string, unknown>>;
  params: Record<string, unknown>;
  trace: { passes: number; updates: number; converged: boolean } | null;
}

export interface TraceView {
  passes: Array<{
    index: number;
    converged: boolean;
    updates: Array<Record<string, unknown>>;
  }>;
  totals: { passes: number; updates: number; converged: boolean };
}

export interface PostprocessResult {
  scores: number[];
  trace: TraceView;
  reportBefore: ReportView;
  reportAfter: ReportView;
}

/** Audit an in-memory table; returns the parsed report document. */
export function py_audit(table: Table, schema: Schema, params: AuditParams = {}): ReportView {
  return withWorkDir(params, (dir) => {
    const input = join(dir, "input.csv");
    writeFileSync(input, tableToCsv(table, schema));
    const out = join(dir, "report.json");
    const args = ["audit", ...dataFlags(input, schema), ...filterFlags(params)];
    if (params.exact) {
      args.push("--exact");
    }
    args.push("--out", out);
    runCli(args, params);
    return JSON.parse(readFileSync(out, "utf-8")) as ReportView;
  });
}

/** Post-process an in-memory table; returns updated scores plus artifacts. */
export function py_postprocess(
  table: Table,
  schema: Schema,
  params: PostprocessParams = {},
): PostprocessResult {
  return withWorkDir(params, (dir) => {
    const input = join(dir, "input.csv");
    writeFileSync(input, tableToCsv(table, schema));
    const prefix = join(dir, "out");
    const args = ["postprocess", ...dataFlags(input, schema), ...filterFlags(params)];
    args.push("--mode", params.mode ?? "pmc");
    if (params.maxPasses !== undefined) {
      args.push("--max-passes", String(params.maxPasses));
    }
    if (params.split !== undefined) {
      args.push("--split", String(params.split));
    }
    if (params.sampleFraction !== undefined) {
      args.push("--sample-fraction", String(params.sampleFraction));
    }
    args.push("--out-prefix", prefix);
    runCli(args, params);

    const scoresTable = parseCsv(readFileSync(`${prefix}_scores.csv`, "utf-8"));
    const scores = columnOf(scoresTable, schema.score).map(Number);
    return {
      scores,
      trace: JSON.parse(readFileSync(`${prefix}_trace.json`, "utf-8")) as TraceView,
      reportBefore: JSON.parse(readFileSync(`${prefix}_report_before.json`, "utf-8")) as ReportView,
      reportAfter: JSON.parse(readFileSync(`${prefix}_report_after.json`, "utf-8")) as ReportView,
    };
  });
}

function tableToCsv(table: Table, schema: Schema): string {
  const columns = [schema.outcome, schema.score, ...schema.attrs];
  if (schema.pStar) {
    columns.push(schema.pStar);
  }
  const length = expectColumns(table, columns);
  const rows: Array<Array<string | number>> = [];
  for (let i = 0; i < length; i += 1) {
    rows.push(columns.map((name) => table[name][i]));
  }
  return serializeCsv(columns, rows);
}

function expectColumns(table: Table, columns: string[]): number {
  let length = -1;
  for (const name of columns) {
    const values = table[name];
    if (!values) {
      throw new Error(`table is missing column ${JSON.stringify(name)}`);
    }
    if (length === -1) {
      length = values.length;
    } else if (values.length !== length) {
      throw new Error(`column ${JSON.stringify(name)} has ${values.length} cells, expected ${length}`);
    }
  }
  if (length <= 0) {
    throw new Error("table has no rows");
  }
  return length;
}

function dataFlags(input: string, schema: Schema): string[] {
  const flags = [
    "--input", input,
    "--outcome-col", schema.outcome,
    "--score-col", schema.score,
    "--groups", schema.attrs.join(","),
  ];
  if (schema.pStar) {
    flags.push("--p-star-col", schema.pStar);
  }
  return flags;
}

function filterFlags(params: CommonParams): string[] {
  const flags: string[] = [];
  const numeric: Array<[string, number | undefined]> = [
    ["--alpha", params.alpha],
    ["--lambda", params.lambda],
    ["--gamma", params.gamma],
    ["--rho", params.rho],
    ["--seed", params.seed],
  ];
  for (const [flag, value] of numeric) {
    if (value !== undefined) {
      flags.push(flag, String(value));
    }
  }
  if (params.bins) {
    flags.push("--bins", params.bins);
  }
  if (params.marginals) {
    flags.push("--marginals");
  }
  return flags;
}

function runCli(args: string[], params: CommonParams): void {
  const command = params.command ?? defaultCommand();
  const result = spawnSync(command[0], [...command.slice(1), ...args], {
    encoding: "utf-8",
    env: { ...process.env, ...params.env },
    maxBuffer: 64 * 1024 * 1024,
  });
  if (result.error) {
    throw result.error;
  }
  if (result.status !== 0) {
    throw new Error(`propcal exited with ${result.status}: ${result.stderr.trim()}`);
  }
}

function defaultCommand(): string[] {
  const bin = process.env.PROPCAL_BIN;
  return bin ? bin.split(" ") : ["propcal"];
}

function withWorkDir<T>(params: CommonParams, body: (dir: string) => T): T {
  if (params.workDir) {
    return body(params.workDir);
  }
  const dir = mkdtempSync(join(tmpdir(), "propcal-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
