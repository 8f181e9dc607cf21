/**
 * Minimal CSV handling for the flat, unquoted files the CLI reads and
 * writes: one header row, comma separators, "\n" line endings, no quoting
 * or embedded separators. Values are kept as raw strings so that a
 * parse/serialize round trip is byte-exact.
 */

export interface CsvTable {
  columns: string[];
  rows: string[][];
}

export function parseCsv(text: string): CsvTable {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV document");
  }
  const columns = lines[0].split(",");
  const rows = lines.slice(1).map((line) => line.split(","));
  for (const row of rows) {
    if (row.length !== columns.length) {
      throw new Error(`ragged CSV row: expected ${columns.length} cells, got ${row.length}`);
    }
  }
  return { columns, rows };
}

export function serializeCsv(columns: string[], rows: Array<Array<string | number>>): string {
  const body = rows.map((row) => row.map(cellText).join(","));
  return [columns.join(","), ...body].join("\n") + "\n";
}

function cellText(value: string | number): string {
  const text = typeof value === "number" ? String(value) : value;
  if (/[",\n\r]/.test(text)) {
    throw new Error(`cell ${JSON.stringify(text)} needs quoting, which the CLI schema does not use`);
  }
  return text;
}

/** Column-major view of a parsed table. */
export function columnOf(table: CsvTable, name: string): string[] {
  const index = table.columns.indexOf(name);
  if (index < 0) {
    throw new Error(`column ${JSON.stringify(name)} not present in ${JSON.stringify(table.columns)}`);
  }
  return table.rows.map((row) => row[index]);
}
