/** Browser entry point: ?api=<service url>&project=<id>. */

import { ApiClient } from "./api.js";
import { Workbench } from "./app.js";

function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const api = params.get("api") ?? "http://127.0.0.1:8571";
  const project = params.get("project");
  const root = document.getElementById("root");
  if (!root) return;
  if (!project) {
    root.innerHTML = `
      <div class="landing">
        <h1>Alignment workbench</h1>
        <p>Open with <code>?project=&lt;id&gt;</code> (and optionally
        <code>&amp;api=&lt;service url&gt;</code>, default
        <code>http://127.0.0.1:8571</code>).</p>
        <p>Create a project by POSTing source and target graphs to
        <code>/projects</code> on the service.</p>
      </div>`;
    return;
  }
  const wb = new Workbench(root, new ApiClient(api), project);
  void wb.load();
}

bootstrap();
