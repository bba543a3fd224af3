/** Inconsistency queue helpers: grouping, ordering, display text. */

import type { ItemKind, ReportItem } from "./api.js";

export const KIND_ORDER: ItemKind[] = ["collision", "unmatched-target", "edge-violation"];

export const KIND_TITLES: Record<ItemKind, string> = {
  collision: "Collisions",
  "unmatched-target": "Unmatched targets",
  "edge-violation": "Edge violations",
};

export interface KindGroup {
  kind: ItemKind;
  title: string;
  items: ReportItem[];
}

/** Group report items by kind in taxonomy order; empty kinds are dropped. */
export function groupByKind(items: ReportItem[]): KindGroup[] {
  return KIND_ORDER.map((kind) => ({
    kind,
    title: KIND_TITLES[kind],
    items: items.filter((it) => it.kind === kind),
  })).filter((g) => g.items.length > 0);
}

export function describe(item: ReportItem): string {
  const p = item.payload;
  switch (item.kind) {
    case "collision":
      return `${(p.sources ?? []).join(", ")} all map onto ${p.target}`;
    case "unmatched-target":
      return `${p.target} has no scene counterpart`;
    case "edge-violation": {
      const [a, b] = p.source_edge ?? ["?", "?"];
      const [fa, fb] = p.mapped_non_edge ?? ["?", "?"];
      return `scene edge ${a} - ${b} lands on missing ${fa} - ${fb}`;
    }
  }
}

/** Nodes/edges the panes should flag when this item is selected. */
export function highlightsFor(item: ReportItem | null): {
  sourceNodes: Set<string>;
  targetNodes: Set<string>;
  sourceEdges: Set<string>;
} {
  const out = {
    sourceNodes: new Set<string>(),
    targetNodes: new Set<string>(),
    sourceEdges: new Set<string>(),
  };
  if (!item) return out;
  const p = item.payload;
  if (item.kind === "collision") {
    (p.sources ?? []).forEach((s) => out.sourceNodes.add(s));
    if (p.target) out.targetNodes.add(p.target);
  } else if (item.kind === "unmatched-target") {
    if (p.target) out.targetNodes.add(p.target);
  } else if (p.source_edge) {
    const [a, b] = p.source_edge;
    out.sourceNodes.add(a).add(b);
    out.sourceEdges.add(edgeKey(a, b));
    (p.mapped_non_edge ?? []).forEach((f) => out.targetNodes.add(f));
  }
  return out;
}

export function edgeKey(a: string, b: string): string {
  return a < b ? `${a}|${b}` : `${b}|${a}`;
}
