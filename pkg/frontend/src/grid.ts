/**
 * Keyed diffing between two rendered lists.
 *
 * The renderer owns one DOM node per cell key and only executes the ops
 * produced here, so two identical consecutive lists produce zero ops and
 * therefore zero DOM churn. Ops are ordered so an executor can apply them
 * left to right: removals first, then placements and field updates walking
 * the new list in display order.
 */

import type { GridCell } from "./state.js";

export type GridOp =
  | { kind: "remove"; key: string }
  | { kind: "place"; key: string; index: number; fresh: boolean }
  | { kind: "update"; key: string; rank?: number; score?: string; isNew?: boolean };

function sameCell(a: GridCell, b: GridCell): boolean {
  return (
    a.key === b.key &&
    a.rank === b.rank &&
    a.id === b.id &&
    a.name === b.name &&
    a.score === b.score &&
    a.isNew === b.isNew
  );
}

export function diffGrid(
  previous: readonly GridCell[],
  next: readonly GridCell[],
): GridOp[] {
  if (previous === next) return [];
  if (
    previous.length === next.length &&
    previous.every((cell, i) => {
      const other = next[i];
      return other !== undefined && sameCell(cell, other);
    })
  ) {
    return [];
  }

  const ops: GridOp[] = [];
  const previousByKey = new Map(previous.map((cell) => [cell.key, cell]));
  const nextKeys = new Set(next.map((cell) => cell.key));

  for (const cell of previous) {
    if (!nextKeys.has(cell.key)) {
      ops.push({ kind: "remove", key: cell.key });
    }
  }

  // Surviving old keys in their old order; a new cell that matches the next
  // survivor in line is already positioned and needs no placement op.
  const survivors = previous.filter((cell) => nextKeys.has(cell.key));
  let survivorAt = 0;

  next.forEach((cell, index) => {
    const old = previousByKey.get(cell.key);
    const inLine =
      old !== undefined &&
      survivorAt < survivors.length &&
      survivors[survivorAt]?.key === cell.key;
    if (inLine) {
      survivorAt += 1;
    } else {
      if (old !== undefined) {
        const at = survivors.findIndex((s, i) => i >= survivorAt && s.key === cell.key);
        if (at >= 0) survivors.splice(at, 1);
      }
      ops.push({ kind: "place", key: cell.key, index, fresh: old === undefined });
    }
    if (old !== undefined) {
      const update: GridOp = { kind: "update", key: cell.key };
      let changed = false;
      if (old.rank !== cell.rank) {
        update.rank = cell.rank;
        changed = true;
      }
      if (old.score !== cell.score) {
        update.score = cell.score;
        changed = true;
      }
      if (old.isNew !== cell.isNew) {
        update.isNew = cell.isNew;
        changed = true;
      }
      if (changed) ops.push(update);
    }
  });

  return ops;
}
