/**
 * Minimal CSV reading for the documented run-artifact schemas.
 * No quoting support needed: the producers write plain numeric cells
 * (semicolon-joined vectors inside a cell are split by the caller).
 */

import { readFileSync } from "fs";

export interface Table {
  header: string[];
  rows: string[][];
}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf8").trim();
  if (text.length === 0) {
    return { header: [], rows: [] };
  }
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((l) => l.split(","));
  return { header, rows };
}

export function column(t: Table, name: string): string[] {
  const i = t.header.indexOf(name);
  if (i < 0) {
    throw new Error(`column ${name} not in ${t.header.join(",")}`);
  }
  return t.rows.map((r) => r[i]);
}

export function numericColumn(t: Table, name: string): number[] {
  return column(t, name).map(Number);
}
