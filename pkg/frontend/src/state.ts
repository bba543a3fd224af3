/** Local view state: selection, overlay, the pending resolution batch.
 *
 * Pending decisions live here until the operator submits; nothing is
 * sent per click. Viewing a historical round freezes editing.
 */

import type { GraphEditDoc, ProjectState, ResolutionPayload } from "./api.js";

export interface ViewState {
  selectedKey: string | null;
  overlayOn: boolean;
  viewedRound: number | null; // null = follow the latest round
  pendingAcceptances: string[];
  pendingEditsSource: GraphEditDoc[];
  pendingEditsTarget: GraphEditDoc[];
  pendingPins: [string, string][];
}

export function freshView(): ViewState {
  return {
    selectedKey: null,
    overlayOn: true,
    viewedRound: null,
    pendingAcceptances: [],
    pendingEditsSource: [],
    pendingEditsTarget: [],
    pendingPins: [],
  };
}

export function latestRound(project: ProjectState): number {
  return project.history.length ? Math.max(...project.history) : project.round;
}

export function isHistorical(view: ViewState, project: ProjectState): boolean {
  // project.round names the round being viewed, so compare to history
  return view.viewedRound !== null && view.viewedRound !== latestRound(project);
}

export function canEdit(view: ViewState, project: ProjectState): boolean {
  return project.state === "awaiting-resolution" && !isHistorical(view, project);
}

export function pendingCount(view: ViewState): number {
  return (
    view.pendingAcceptances.length +
    view.pendingEditsSource.length +
    view.pendingEditsTarget.length +
    view.pendingPins.length
  );
}

export function clearPending(view: ViewState): void {
  view.pendingAcceptances = [];
  view.pendingEditsSource = [];
  view.pendingEditsTarget = [];
  view.pendingPins = [];
}

/** Assemble the submit payload; the round token rides on every mutation. */
export function buildResolution(view: ViewState, round: number): ResolutionPayload {
  return {
    round,
    acceptances: [...view.pendingAcceptances],
    edits_source: [...view.pendingEditsSource],
    edits_target: [...view.pendingEditsTarget],
    pins: view.pendingPins.map((p) => [...p] as [string, string]),
  };
}

export function toggleAcceptance(view: ViewState, key: string): void {
  const i = view.pendingAcceptances.indexOf(key);
  if (i >= 0) view.pendingAcceptances.splice(i, 1);
  else view.pendingAcceptances.push(key);
}

function sameEdit(a: GraphEditDoc, b: GraphEditDoc): boolean {
  return a.op === b.op && a.targets.join("|") === b.targets.join("|");
}

export function toggleSourceEdit(view: ViewState, edit: GraphEditDoc): void {
  const i = view.pendingEditsSource.findIndex((e) => sameEdit(e, edit));
  if (i >= 0) view.pendingEditsSource.splice(i, 1);
  else view.pendingEditsSource.push(edit);
}

export function removeEdgeEdit(a: string, b: string): GraphEditDoc {
  const [x, y] = a < b ? [a, b] : [b, a];
  return { op: "remove-edge", targets: [x, y] };
}
