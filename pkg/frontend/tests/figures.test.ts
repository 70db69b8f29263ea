import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { EXPECTED_COLUMNS } from "../src/csv.js";
import { renderFigures, smokeCheck, writeGolden } from "../src/figures.js";

const HEADER = EXPECTED_COLUMNS.join(",");

let workDir: string;

beforeEach(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), "figtest-"));
});

afterEach(() => {
  fs.rmSync(workDir, { recursive: true, force: true });
});

function writeCsv(rows: string[]): string {
  const p = path.join(workDir, "metrics.csv");
  fs.writeFileSync(p, [HEADER, ...rows].join("\n") + "\n");
  return p;
}

function syntheticRows(): string[] {
  const rows: string[] = [];
  for (const [axis, values] of [
    ["devices", [32, 64]],
    ["sampling", [3]],
    ["thresholds", [1]],
  ] as Array<[string, number[]]>) {
    for (const value of values) {
      for (const solution of [1, 2]) {
        for (const cp of [120, 240]) {
          rows.push(`${axis},${value},${solution},${cp},liver,liver,1,${10 + cp / 100}`);
          rows.push(`${axis},${value},${solution},${cp},head,stomach,1,${25 + solution}`);
          rows.push(`${axis},${value},${solution},${cp},neck,,0,`);
        }
      }
    }
  }
  return rows;
}

describe("renderFigures", () => {
  it("writes one panel per sweep value and solution", () => {
    const csvPath = writeCsv(syntheticRows());
    const outDir = path.join(workDir, "figs");
    const files = renderFigures({ csvPath, axis: "devices", outDir, format: "svg" });
    expect(files.map((f) => path.basename(f))).toEqual([
      "devices_32_solution1.svg",
      "devices_32_solution2.svg",
      "devices_64_solution1.svg",
      "devices_64_solution2.svg",
    ]);
    const svg = fs.readFileSync(files[0], "utf-8");
    expect(svg).toContain("<svg");
    expect(svg).toContain("region detection accuracy");
    expect(svg).toContain("reliability");
    expect(svg).toContain('class="box"');
  });

  it("renders a single-checkpoint CSV without error", () => {
    const csvPath = writeCsv(["devices,64,1,120,liver,liver,1,10"]);
    const files = renderFigures({
      csvPath,
      axis: "devices",
      outDir: path.join(workDir, "figs"),
      format: "svg",
    });
    expect(files).toHaveLength(1);
  });

  it("rejects unknown axes and non-vector formats", () => {
    const csvPath = writeCsv(syntheticRows());
    const outDir = path.join(workDir, "figs");
    expect(() =>
      renderFigures({ csvPath, axis: "bogus", outDir, format: "svg" }),
    ).toThrowError(/unknown sweep axis/);
    expect(() =>
      renderFigures({ csvPath, axis: "devices", outDir, format: "png" }),
    ).toThrowError(/unsupported format/);
  });

  it("names the missing column on schema mismatch", () => {
    const bad = path.join(workDir, "bad.csv");
    fs.writeFileSync(
      bad,
      HEADER.replace(",available", "") + "\ndevices,64,1,120,liver,liver,1\n",
    );
    expect(() =>
      renderFigures({
        csvPath: bad,
        axis: "devices",
        outDir: path.join(workDir, "figs"),
        format: "svg",
      }),
    ).toThrowError(/missing column 'available'/);
  });
});

describe("smokeCheck", () => {
  it("passes against freshly written goldens and fails after a perturbation", () => {
    const csvPath = writeCsv(syntheticRows());
    const goldenDir = path.join(workDir, "golden");
    writeGolden(csvPath, goldenDir);
    expect(smokeCheck(csvPath, goldenDir)).toEqual([]);

    // perturb one error value: the named figure must fail
    const perturbed = syntheticRows().map((r, i) =>
      i === 0 ? r.replace("11.2", "11.3") : r,
    );
    const p2 = path.join(workDir, "metrics2.csv");
    fs.writeFileSync(p2, [HEADER, ...perturbed].join("\n") + "\n");
    const failures = smokeCheck(p2, goldenDir);
    expect(failures.length).toBeGreaterThan(0);
    expect(failures[0].figure).toBe("devices_32_solution1");

    // regenerating the goldens after an intentional change makes it pass
    writeGolden(p2, goldenDir);
    expect(smokeCheck(p2, goldenDir)).toEqual([]);
  });
});
