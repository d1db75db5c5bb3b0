/**
 * Minimal CSV reader for the runner's output schema: a header row, LF or
 * CRLF line endings, no quoting (the runner never emits commas inside
 * fields), empty string for missing optional values.
 */

export type Row = Record<string, string>;

export interface Table {
  header: string[];
  rows: Row[];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV");
  }
  const header = lines[0].split(",");
  const rows: Row[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cols = lines[i].split(",");
    if (cols.length !== header.length) {
      throw new Error(`row ${i + 1}: expected ${header.length} columns, got ${cols.length}`);
    }
    const row: Row = {};
    for (let j = 0; j < header.length; j++) {
      row[header[j]] = cols[j];
    }
    rows.push(row);
  }
  return { header, rows };
}

/** Numeric cell access; empty cells become null, anything else must parse. */
export function num(row: Row, column: string): number | null {
  const raw = row[column];
  if (raw === undefined) {
    throw new Error(`missing column ${column}`);
  }
  if (raw === "") {
    return null;
  }
  const v = Number(raw);
  if (Number.isNaN(v)) {
    throw new Error(`column ${column}: not a number: ${raw}`);
  }
  return v;
}

export function requireColumns(table: Table, columns: string[]): void {
  for (const c of columns) {
    if (!table.header.includes(c)) {
      throw new Error(`CSV is missing column ${c}`);
    }
  }
}
