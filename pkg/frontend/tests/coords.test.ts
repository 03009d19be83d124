import { describe, expect, it } from "vitest";

import {
  cellIndex,
  cellToCoord,
  coordToCell,
  grayToValue,
  gridCells,
  valueToGray,
} from "../src/coords.js";

describe("cell-center conversion", () => {
  it("places corner cells of a 16x16 grid at +-0.9375", () => {
    expect(cellToCoord([0, 0], [16, 16])).toEqual([-0.9375, -0.9375]);
    expect(cellToCoord([15, 15], [16, 16])).toEqual([0.9375, 0.9375]);
    expect(cellToCoord([0, 15], [16, 16])).toEqual([-0.9375, 0.9375]);
  });

  it("round-trips every cell of an asymmetric grid exactly", () => {
    for (let r = 0; r < 7; r++) {
      for (let c = 0; c < 5; c++) {
        expect(coordToCell(cellToCoord([r, c], [7, 5]), [7, 5])).toEqual([r, c]);
      }
    }
  });

  it("clamps boundary coordinates into the grid", () => {
    expect(coordToCell([1, 1], [4, 4])).toEqual([3, 3]);
    expect(coordToCell([-1, -1], [4, 4])).toEqual([0, 0]);
  });

  it("rejects out-of-grid cells and dimension mismatches", () => {
    expect(() => cellToCoord([4], [4, 4])).toThrow(RangeError);
    expect(() => cellToCoord([4, 0], [4, 4])).toThrow(RangeError);
    expect(() => cellToCoord([-1, 0], [4, 4])).toThrow(RangeError);
  });

  it("computes row-major flat indices", () => {
    expect(cellIndex([0, 0], [3, 5])).toBe(0);
    expect(cellIndex([1, 2], [3, 5])).toBe(7);
    expect(cellIndex([2, 4], [3, 5])).toBe(14);
    expect(gridCells([3, 5])).toBe(15);
  });
});

describe("gray mapping", () => {
  it("maps the value range onto 0..255", () => {
    expect(valueToGray(-1)).toBe(0);
    expect(valueToGray(1)).toBe(255);
    expect(valueToGray(0)).toBe(128);
  });

  it("round-trips brush levels within one gray step", () => {
    for (const g of [0, 1, 64, 128, 254, 255]) {
      expect(valueToGray(grayToValue(g))).toBe(g);
    }
  });
});
