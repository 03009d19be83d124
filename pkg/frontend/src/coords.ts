// Grid-cell <-> coordinate conversion. Cell i on an axis of n cells sits at
// the cell center -1 + 2 * (i + 0.5) / n, matching the server's rendering
// convention, so a round trip through the server is exact.

export function cellToCoord(cell: number[], gridShape: number[]): number[] {
  if (cell.length !== gridShape.length) {
    throw new RangeError(`cell has ${cell.length} indices for a ${gridShape.length}-d grid`);
  }
  return cell.map((i, axis) => {
    const n = gridShape[axis];
    if (!Number.isInteger(i) || i < 0 || i >= n) {
      throw new RangeError(`cell index ${i} outside axis of ${n} cells`);
    }
    return -1 + (2 * (i + 0.5)) / n;
  });
}

export function coordToCell(x: number[], gridShape: number[]): number[] {
  if (x.length !== gridShape.length) {
    throw new RangeError(`coordinate has ${x.length} entries for a ${gridShape.length}-d grid`);
  }
  return x.map((t, axis) => {
    const n = gridShape[axis];
    const i = Math.floor(((t + 1) / 2) * n);
    return Math.min(Math.max(i, 0), n - 1);
  });
}

/** Row-major flat index of a cell. */
export function cellIndex(cell: number[], gridShape: number[]): number {
  let idx = 0;
  for (let axis = 0; axis < gridShape.length; axis++) {
    idx = idx * gridShape[axis] + cell[axis];
  }
  return idx;
}

export function gridCells(gridShape: number[]): number {
  return gridShape.reduce((a, b) => a * b, 1);
}

/** Value in [-1, 1] -> display gray level 0..255. */
export function valueToGray(v: number): number {
  const g = Math.round(((v + 1) / 2) * 255);
  return Math.min(Math.max(g, 0), 255);
}

export function grayToValue(g: number): number {
  return (2 * g) / 255 - 1;
}
