/** Dual-pane SVG rendering with the mapping overlaid between panes. */

import type { GraphDoc, MappingDoc } from "./api.js";
import { forceLayout, type Point } from "./layout.js";
import { edgeKey } from "./queue.js";

const SVG_NS = "http://www.w3.org/2000/svg";
export const PANE_W = 470;
export const PANE_H = 440;
const PANE_GAP = 20;

export interface Highlights {
  sourceNodes: Set<string>;
  targetNodes: Set<string>;
  sourceEdges: Set<string>;
}

export interface RenderOptions {
  mapping: MappingDoc | null;
  overlay: boolean;
  accepted: Set<string>; // accepted inconsistency keys
  highlights: Highlights;
}

function el(tag: string, attrs: Record<string, string>): SVGElement {
  const e = document.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  return e;
}

function paneGroup(
  pane: "source" | "target",
  graph: GraphDoc,
  pos: Map<string, Point>,
  opts: RenderOptions,
  matched: Set<string>,
): SVGElement {
  const g = el("g", {
    "data-pane": pane,
    transform: pane === "source" ? "translate(0,0)" : `translate(${PANE_W + PANE_GAP},0)`,
  });
  g.appendChild(
    el("rect", { class: "pane-bg", width: String(PANE_W), height: String(PANE_H) }),
  );
  const caption = el("text", { class: "pane-caption", x: "10", y: "20" });
  caption.textContent = pane === "source" ? "Scene (S)" : "Schematic (F)";
  g.appendChild(caption);

  if (graph.nodes.length === 0) {
    const empty = el("text", {
      class: "pane-empty",
      x: String(PANE_W / 2),
      y: String(PANE_H / 2),
      "text-anchor": "middle",
    });
    empty.textContent = "nothing to render";
    g.appendChild(empty);
    return g;
  }

  const nodeHl = pane === "source" ? opts.highlights.sourceNodes : opts.highlights.targetNodes;
  for (const [a, b] of graph.edges) {
    const pa = pos.get(a);
    const pb = pos.get(b);
    if (!pa || !pb) continue;
    const key = edgeKey(a, b);
    const classes = ["edge"];
    if (pane === "source" && opts.highlights.sourceEdges.has(key)) classes.push("violation");
    g.appendChild(
      el("line", {
        class: classes.join(" "),
        "data-edge-key": key,
        "data-pane": pane,
        x1: String(pa.x),
        y1: String(pa.y),
        x2: String(pb.x),
        y2: String(pb.y),
      }),
    );
  }

  const unmatched = new Set(opts.mapping?.unmatched_target ?? []);
  for (const node of graph.nodes) {
    const p = pos.get(node.id);
    if (!p) continue;
    const classes = ["node", `kind-${node.kind}`];
    if (pane === "target" && unmatched.has(node.id)) {
      // an accepted divergence reads differently from an open one
      classes.push(opts.accepted.has(`unmatched-target:${node.id}`) ? "accepted" : "unmatched");
    }
    if (pane === "target" && opts.mapping && !matched.has(node.id) && !unmatched.has(node.id)) {
      classes.push("unlinked");
    }
    if (nodeHl.has(node.id)) classes.push("flagged");
    const wrap = el("g", {
      class: classes.join(" "),
      "data-node-id": node.id,
      "data-pane": pane,
      transform: `translate(${p.x},${p.y})`,
    });
    wrap.appendChild(el("circle", { r: node.kind === "equipment" ? "11" : "8" }));
    const label = el("text", { class: "node-label", y: "-14", "text-anchor": "middle" });
    label.textContent = node.label;
    const name = el("text", { class: "node-id", y: "24", "text-anchor": "middle" });
    name.textContent = node.id;
    wrap.appendChild(label);
    wrap.appendChild(name);
    g.appendChild(wrap);
  }
  return g;
}

/** Rebuild the two panes plus overlay inside `svg`. */
export function renderDual(
  svg: SVGElement,
  source: GraphDoc | null,
  target: GraphDoc | null,
  opts: RenderOptions,
): void {
  svg.setAttribute("viewBox", `0 0 ${PANE_W * 2 + PANE_GAP} ${PANE_H}`);
  while (svg.firstChild) svg.removeChild(svg.firstChild);
  const S = source ?? { provenance: "scene", nodes: [], edges: [] };
  const F = target ?? { provenance: "functional", nodes: [], edges: [] };
  const posS = forceLayout(S.nodes.map((n) => n.id), S.edges, PANE_W, PANE_H);
  const posF = forceLayout(F.nodes.map((n) => n.id), F.edges, PANE_W, PANE_H);
  const matched = new Set((opts.mapping?.pairs ?? []).map((p) => p.target));

  svg.appendChild(paneGroup("source", S, posS, opts, matched));
  svg.appendChild(paneGroup("target", F, posF, opts, matched));

  const overlay = el("g", { "data-role": "overlay" });
  if (opts.overlay && opts.mapping) {
    for (const pair of opts.mapping.pairs) {
      const a = posS.get(pair.source);
      const b = posF.get(pair.target);
      if (!a || !b) continue;
      overlay.appendChild(
        el("line", {
          class: "pair-link",
          "data-link": `${pair.source}->${pair.target}`,
          x1: String(a.x),
          y1: String(a.y),
          x2: String(b.x + PANE_W + PANE_GAP),
          y2: String(b.y),
          opacity: String(0.25 + 0.6 * pair.confidence),
        }),
      );
    }
  }
  svg.appendChild(overlay);
}
