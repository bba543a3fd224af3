/** Workbench orchestration: one project, two panes, a triage queue. */

import { ApiClient, ApiError, type ProjectState, type ReportItem } from "./api.js";
import { describe, edgeKey, groupByKind, highlightsFor } from "./queue.js";
import { renderDual } from "./render.js";
import {
  buildResolution,
  canEdit,
  clearPending,
  freshView,
  isHistorical,
  latestRound,
  pendingCount,
  removeEdgeEdit,
  toggleAcceptance,
  toggleSourceEdit,
  type ViewState,
} from "./state.js";

const BANNER_TEXT: Record<ProjectState["state"], string> = {
  idle: "Idle",
  matching: "Matching",
  "awaiting-resolution": "Awaiting resolution",
  converged: "Converged",
};

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

export interface WorkbenchOptions {
  pollMs?: number;
}

export class Workbench {
  readonly view: ViewState = freshView();
  project: ProjectState | null = null;
  private readonly pollMs: number;
  private watching = false;

  constructor(
    readonly root: HTMLElement,
    readonly client: ApiClient,
    readonly projectId: string,
    opts: WorkbenchOptions = {},
  ) {
    this.pollMs = opts.pollMs ?? 500;
    this.buildSkeleton();
    this.wire();
  }

  // -- dom ----------------------------------------------------------------

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <div class="workbench">
        <header class="toolbar">
          <span id="project-label" class="project-label"></span>
          <span id="status-banner" class="banner"></span>
          <span id="progress" class="progress"></span>
          <button id="run-btn" type="button">Run matching</button>
          <label class="overlay-label">
            <input type="checkbox" id="overlay-toggle" checked /> mapping overlay
          </label>
          <label class="round-label">round
            <select id="round-select"></select>
          </label>
          <span id="conflict-banner" class="conflict" hidden></span>
        </header>
        <main class="panes">
          <svg id="dual" class="dual" role="img"></svg>
          <aside id="sidebar">
            <h2>Inconsistencies</h2>
            <div id="queue"></div>
            <div id="pending-summary"></div>
            <button id="submit-btn" type="button">Submit resolutions</button>
          </aside>
        </main>
      </div>`;
  }

  private q<T extends Element>(sel: string): T {
    const e = this.root.querySelector<T>(sel);
    if (!e) throw new Error(`missing element ${sel}`);
    return e;
  }

  private wire(): void {
    this.q<HTMLButtonElement>("#run-btn").addEventListener("click", () => {
      void this.runMatch();
    });
    this.q<HTMLButtonElement>("#submit-btn").addEventListener("click", () => {
      void this.submit();
    });
    this.q<HTMLInputElement>("#overlay-toggle").addEventListener("change", (ev) => {
      this.view.overlayOn = (ev.target as HTMLInputElement).checked;
      this.render();
    });
    this.q<HTMLSelectElement>("#round-select").addEventListener("change", (ev) => {
      const n = Number((ev.target as HTMLSelectElement).value);
      void this.load(n);
    });

    const queue = this.q<HTMLElement>("#queue");
    queue.addEventListener("click", (ev) => {
      const target = ev.target as HTMLElement;
      const card = target.closest<HTMLElement>(".item");
      if (!card) return;
      const key = card.dataset.key!;
      if (target.closest(".accept-btn")) {
        this.acceptItem(key);
      } else if (target.closest(".remove-edge-btn")) {
        this.removeEdgeForItem(key);
      } else {
        this.view.selectedKey = this.view.selectedKey === key ? null : key;
        this.render();
      }
    });

    const svg = this.q<SVGElement>("#dual");
    svg.addEventListener("click", (ev) => {
      const edge = (ev.target as Element).closest<SVGElement>("line.edge.violation");
      if (edge && edge.getAttribute("data-pane") === "source") {
        const [a, b] = (edge.getAttribute("data-edge-key") ?? "|").split("|");
        this.queueRemoveEdge(a!, b!);
      }
    });
    svg.addEventListener("mouseover", (ev) => {
      const node = (ev.target as Element).closest<SVGElement>("[data-node-id]");
      if (node) this.setPulse(node, true);
    });
    svg.addEventListener("mouseout", (ev) => {
      const node = (ev.target as Element).closest<SVGElement>("[data-node-id]");
      if (node) this.setPulse(node, false);
    });
  }

  /** Hovering a node pulses its counterpart in the other pane. */
  private setPulse(node: SVGElement, on: boolean): void {
    const mapping = this.project?.mapping;
    if (!mapping) return;
    const id = node.getAttribute("data-node-id");
    const pane = node.getAttribute("data-pane");
    const others =
      pane === "source"
        ? mapping.pairs.filter((p) => p.source === id).map((p) => p.target)
        : mapping.pairs.filter((p) => p.target === id).map((p) => p.source);
    const otherPane = pane === "source" ? "target" : "source";
    for (const other of others) {
      const el = this.root.querySelector(
        `[data-pane="${otherPane}"][data-node-id="${other}"]`,
      );
      if (el) el.classList.toggle("pulse", on);
    }
  }

  // -- data flow ------------------------------------------------------------

  async load(round?: number): Promise<void> {
    this.view.viewedRound = round ?? null;
    this.project = await this.client.getProject(this.projectId, round);
    this.render();
    if (this.project.state === "matching") await this.watchUntilSettled();
  }

  /** Poll the project until a running match settles, then re-render. */
  private async watchUntilSettled(): Promise<void> {
    if (this.watching) return;
    this.watching = true;
    try {
      for (;;) {
        const state = await this.client.getProject(this.projectId);
        if (state.state !== "matching") break;
        await sleep(this.pollMs);
      }
    } finally {
      this.watching = false;
    }
    await this.load();
  }

  async runMatch(): Promise<void> {
    const project = this.project;
    if (!project || isHistorical(this.view, project)) return;
    let jobId: string;
    try {
      ({ job_id: jobId } = await this.client.triggerMatch(this.projectId));
    } catch (err) {
      this.showConflict(err);
      return;
    }
    this.setBanner("matching");
    for (;;) {
      const job = await this.client.getJob(this.projectId, jobId);
      this.q<HTMLElement>("#progress").textContent =
        job.status === "running"
          ? `iteration ${job.progress.iteration}/${job.progress.total}`
          : "";
      if (job.status === "failed") {
        this.showConflict(new Error(job.error ?? "matching failed"));
        break;
      }
      if (job.status === "done") break;
      await sleep(this.pollMs);
    }
    await this.load();
  }

  acceptItem(key: string): void {
    const project = this.project;
    if (!project || !canEdit(this.view, project)) return;
    toggleAcceptance(this.view, key);
    this.render();
  }

  removeEdgeForItem(key: string): void {
    const item = this.findItem(key);
    if (!item || !item.payload.source_edge) return;
    const [a, b] = item.payload.source_edge;
    this.queueRemoveEdge(a, b);
  }

  queueRemoveEdge(a: string, b: string): void {
    const project = this.project;
    if (!project || !canEdit(this.view, project)) return;
    toggleSourceEdit(this.view, removeEdgeEdit(a, b));
    this.render();
  }

  async submit(): Promise<void> {
    const project = this.project;
    if (!project || !canEdit(this.view, project) || pendingCount(this.view) === 0) return;
    const payload = buildResolution(this.view, latestRound(project));
    try {
      await this.client.submitResolution(this.projectId, payload);
      clearPending(this.view);
      await this.load();
    } catch (err) {
      // a conflict means another tab moved the round: drop the pending
      // marks and resync rather than re-sending against stale state
      this.showConflict(err);
      clearPending(this.view);
      await this.load();
    }
  }

  private showConflict(err: unknown): void {
    const banner = this.q<HTMLElement>("#conflict-banner");
    banner.hidden = false;
    banner.textContent =
      err instanceof ApiError && err.isConflict
        ? `Conflict: ${err.detail}`
        : `Error: ${err instanceof Error ? err.message : String(err)}`;
  }

  private findItem(key: string): ReportItem | null {
    return this.project?.report?.items.find((it) => it.key === key) ?? null;
  }

  // -- rendering ------------------------------------------------------------

  private setBanner(state: ProjectState["state"]): void {
    const banner = this.q<HTMLElement>("#status-banner");
    banner.textContent = BANNER_TEXT[state];
    banner.className = `banner banner-${state}`;
  }

  render(): void {
    const project = this.project;
    if (!project) return;
    const historical = isHistorical(this.view, project);
    const editable = canEdit(this.view, project);

    this.q<HTMLElement>("#project-label").textContent =
      `${project.project_id} · round ${project.round}`;
    this.setBanner(project.state);
    this.q<HTMLElement>(".workbench").classList.toggle("read-only", historical);

    const select = this.q<HTMLSelectElement>("#round-select");
    select.innerHTML = project.history
      .map((n) => `<option value="${n}">${n}</option>`)
      .join("");
    select.value = String(this.view.viewedRound ?? latestRound(project));

    const runBtn = this.q<HTMLButtonElement>("#run-btn");
    runBtn.disabled =
      historical || !(project.state === "idle" || project.state === "awaiting-resolution");

    renderDual(this.q<SVGElement>("#dual"), project.source, project.target, {
      mapping: project.mapping,
      overlay: this.view.overlayOn,
      accepted: new Set(project.accepted),
      highlights: highlightsFor(this.findItem(this.view.selectedKey ?? "")),
    });

    this.renderQueue(editable);
    const pending = pendingCount(this.view);
    this.q<HTMLElement>("#pending-summary").textContent =
      pending > 0 ? `${pending} pending decision(s)` : "";
    this.q<HTMLButtonElement>("#submit-btn").disabled = !editable || pending === 0;
  }

  private renderQueue(editable: boolean): void {
    const queue = this.q<HTMLElement>("#queue");
    const items = this.project?.report?.items ?? [];
    if (items.length === 0) {
      queue.innerHTML = `<p class="queue-empty">no inconsistencies reported</p>`;
      return;
    }
    const pendingEdits = this.view.pendingEditsSource;
    queue.innerHTML = groupByKind(items)
      .map(
        (group) => `
        <section class="kind-group" data-kind="${group.kind}">
          <h3>${group.title} <span class="count">${group.items.length}</span></h3>
          ${group.items.map((item) => this.itemCard(item, editable, pendingEdits)).join("")}
        </section>`,
      )
      .join("");
  }

  private itemCard(
    item: ReportItem,
    editable: boolean,
    pendingEdits: { targets: string[] }[],
  ): string {
    const pendingAccept = this.view.pendingAcceptances.includes(item.key);
    const edgePending =
      item.payload.source_edge !== undefined &&
      pendingEdits.some(
        (e) => e.targets.join("|") === edgeKey(...item.payload.source_edge!),
      );
    const classes = ["item", `status-${item.status}`];
    if (this.view.selectedKey === item.key) classes.push("selected");
    if (pendingAccept || edgePending) classes.push("pending");
    const disabled = editable && item.status === "open" ? "" : "disabled";
    const buttons =
      item.status === "open"
        ? `<button type="button" class="accept-btn" ${disabled}>
             ${pendingAccept ? "Undo accept" : "Accept"}
           </button>` +
          (item.payload.source_edge
            ? `<button type="button" class="remove-edge-btn" ${disabled}>
                 ${edgePending ? "Undo remove" : `Remove edge ${item.payload.source_edge[0]} - ${item.payload.source_edge[1]}`}
               </button>`
            : "")
        : `<span class="accepted-tag">accepted</span>`;
    return `
      <article class="${classes.join(" ")}" data-key="${item.key}">
        <div class="item-key">${item.key}</div>
        <div class="item-desc">${describe(item)}</div>
        <div class="item-actions">${buttons}</div>
      </article>`;
  }
}
