/** Strict reader for the simulator's metrics.csv schema. */

export interface MetricsRow {
  sweepAxis: string;
  sweepValue: number;
  solution: number;
  checkpointS: number;
  eventRegion: string;
  predictedRegion: string | null;
  available: boolean;
  pointErrorCm: number | null;
}

export const EXPECTED_COLUMNS = [
  "sweep_axis",
  "sweep_value",
  "solution",
  "checkpoint_s",
  "event_region",
  "predicted_region",
  "available",
  "point_error_cm",
] as const;

export class SchemaError extends Error {}

export function parseMetricsCsv(text: string): MetricsRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty metrics CSV");
  }
  const header = lines[0].split(",");
  for (const col of EXPECTED_COLUMNS) {
    if (!header.includes(col)) {
      throw new SchemaError(`missing column '${col}'`);
    }
  }
  for (const col of header) {
    if (!(EXPECTED_COLUMNS as readonly string[]).includes(col)) {
      throw new SchemaError(`unknown column '${col}'`);
    }
  }
  if (header.join(",") !== EXPECTED_COLUMNS.join(",")) {
    throw new SchemaError("columns out of order");
  }
  const rows: MetricsRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== EXPECTED_COLUMNS.length) {
      throw new SchemaError(`row ${i + 1}: expected ${EXPECTED_COLUMNS.length} fields`);
    }
    const [axis, value, solution, checkpoint, region, predicted, available, err] = parts;
    const row: MetricsRow = {
      sweepAxis: axis,
      sweepValue: parseFinite(value, i, "sweep_value"),
      solution: parseFinite(solution, i, "solution"),
      checkpointS: parseFinite(checkpoint, i, "checkpoint_s"),
      eventRegion: region,
      predictedRegion: predicted === "" ? null : predicted,
      available: available === "1",
      pointErrorCm: err === "" ? null : parseFinite(err, i, "point_error_cm"),
    };
    if (available !== "0" && available !== "1") {
      throw new SchemaError(`row ${i + 1}: available must be 0 or 1`);
    }
    if (row.available !== (row.pointErrorCm !== null)) {
      throw new SchemaError(`row ${i + 1}: point_error_cm must be present iff available`);
    }
    rows.push(row);
  }
  return rows;
}

function parseFinite(text: string, rowIdx: number, column: string): number {
  const v = Number(text);
  if (!Number.isFinite(v)) {
    throw new SchemaError(`row ${rowIdx + 1}: bad number in ${column}: '${text}'`);
  }
  return v;
}
