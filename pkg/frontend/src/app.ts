/** Single-page UI: fine-tune launch chains, evaluation, and interactive Q&A. */

import { ApiClient, ApiError, AnswerResponse, EvalReport, JobView } from "./api.js";
import { Sleeper, realSleep, waitForJob } from "./poll.js";

/** Prefilled hyperparameter defaults handed to the trainer. */
export const EMBED_DEFAULTS = {
  learningRate: "1e-5",
  batchSize: 16,
  epochs: 3,
  warmupPercent: 10,
};

export const LLM_DEFAULTS = {
  learningRate: "5e-5",
  batchSize: 64,
  epochs: 3,
  warmupPercent: 10,
  loraRank: 32,
};

export const TABS = ["embed", "llm", "evaluate", "qa"] as const;
export type TabName = (typeof TABS)[number];

export function formatPercent(fraction: number): string {
  return `${(fraction * 100).toFixed(1)}%`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function hyperparamList(values: Record<string, string | number>): HTMLElement {
  const list = el("dl", { class: "hyperparams" });
  for (const [key, value] of Object.entries(values)) {
    list.appendChild(el("dt", {}, key));
    const input = el("input", {
      name: key,
      value: String(value),
      "data-testid": `param-${key}`,
    });
    const dd = el("dd");
    dd.appendChild(input);
    list.appendChild(dd);
  }
  return list;
}

export class App {
  readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly sleep: Sleeper;
  private readonly panes = new Map<TabName, HTMLElement>();
  activeTab: TabName = "embed";

  constructor(root: HTMLElement, client: ApiClient, sleep: Sleeper = realSleep) {
    this.root = root;
    this.client = client;
    this.sleep = sleep;
    this.render();
  }

  private render(): void {
    this.root.textContent = "";
    const nav = el("nav", { class: "tabs" });
    const labels: Record<TabName, string> = {
      embed: "Embedding fine-tune",
      llm: "LLM fine-tune",
      evaluate: "Evaluate",
      qa: "Q&A",
    };
    for (const tab of TABS) {
      const button = el("button", { "data-testid": `tab-${tab}` }, labels[tab]);
      button.addEventListener("click", () => this.showTab(tab));
      nav.appendChild(button);
    }
    this.root.appendChild(nav);
    this.panes.set("embed", this.buildEmbedPane());
    this.panes.set("llm", this.buildLlmPane());
    this.panes.set("evaluate", this.buildEvaluatePane());
    this.panes.set("qa", this.buildQaPane());
    for (const pane of this.panes.values()) this.root.appendChild(pane);
    this.showTab("embed");
  }

  showTab(tab: TabName): void {
    this.activeTab = tab;
    for (const [name, pane] of this.panes) {
      pane.style.display = name === tab ? "" : "none";
    }
  }

  private banner(pane: HTMLElement, message: string): void {
    const box = pane.querySelector<HTMLElement>("[data-testid=banner]");
    if (box) {
      box.textContent = message;
      box.style.display = message ? "" : "none";
    }
  }

  private jobRow(pane: HTMLElement, kind: string): HTMLElement {
    const list = pane.querySelector("[data-testid=job-list]")!;
    const row = el("div", { class: "job", "data-testid": `job-${kind}` });
    row.appendChild(el("span", { class: "job-kind" }, kind));
    row.appendChild(el("span", { class: "job-state", "data-testid": "job-state" }, "queued"));
    row.appendChild(el("progress", { max: "1", value: "0" }));
    row.appendChild(el("pre", { class: "log-tail", "data-testid": "log-tail" }));
    list.appendChild(row);
    return row;
  }

  private applyJobView(row: HTMLElement, job: JobView): void {
    row.querySelector(".job-state")!.textContent = job.state;
    row.querySelector("progress")!.value = job.progress;
    row.querySelector(".log-tail")!.textContent = job.log_tail.slice(-5).join("\n");
  }

  /** Launch one job and poll it to a terminal state, rendering as it moves. */
  private async runJob(
    pane: HTMLElement,
    kind: string,
    params: Record<string, unknown> = {},
  ): Promise<JobView> {
    const row = this.jobRow(pane, kind);
    const { job_id } = await this.client.createJob(kind, params);
    return waitForJob(this.client, job_id, (job) => this.applyJobView(row, job), this.sleep);
  }

  // -- Embedding fine-tune: ingest -> datagen -> export_ft chain ------------

  private buildEmbedPane(): HTMLElement {
    const pane = el("section", { "data-testid": "pane-embed" });
    pane.appendChild(el("h2", {}, "Embedding fine-tune"));
    pane.appendChild(hyperparamList(EMBED_DEFAULTS));
    pane.appendChild(el("div", { "data-testid": "banner", class: "banner", style: "display:none" }));
    pane.appendChild(el("div", { "data-testid": "job-list" }));
    const start = el("button", { "data-testid": "start-embed" }, "Start");
    start.addEventListener("click", () => void this.startEmbedChain());
    pane.appendChild(start);
    pane.appendChild(el("div", { "data-testid": "chain-status" }));
    return pane;
  }

  async startEmbedChain(): Promise<void> {
    const pane = this.panes.get("embed")!;
    const status = pane.querySelector("[data-testid=chain-status]")!;
    this.banner(pane, "");
    status.textContent = "running";
    try {
      for (const kind of ["ingest", "datagen", "export_ft"]) {
        const job = await this.runJob(pane, kind);
        if (job.state === "failed") {
          status.textContent = `failed at ${kind}`;
          return;
        }
      }
      status.textContent = "chain succeeded";
    } catch (err) {
      status.textContent = "failed";
      this.banner(pane, this.describeError(err));
    }
  }

  // -- LLM fine-tune: export triplets for the adapter trainer ----------------

  private buildLlmPane(): HTMLElement {
    const pane = el("section", { "data-testid": "pane-llm" });
    pane.appendChild(el("h2", {}, "LLM fine-tune"));
    pane.appendChild(hyperparamList(LLM_DEFAULTS));
    pane.appendChild(el("div", { "data-testid": "banner", class: "banner", style: "display:none" }));
    pane.appendChild(el("div", { "data-testid": "job-list" }));
    const start = el("button", { "data-testid": "start-llm" }, "Export triplets");
    start.addEventListener("click", () => void this.startLlmExport());
    pane.appendChild(start);
    pane.appendChild(el("div", { "data-testid": "chain-status" }));
    return pane;
  }

  async startLlmExport(): Promise<void> {
    const pane = this.panes.get("llm")!;
    const status = pane.querySelector("[data-testid=chain-status]")!;
    this.banner(pane, "");
    try {
      const job = await this.runJob(pane, "export_ft");
      status.textContent = job.state === "succeeded" ? "export succeeded" : "failed";
    } catch (err) {
      status.textContent = "failed";
      this.banner(pane, this.describeError(err));
    }
  }

  // -- Evaluate --------------------------------------------------------------

  private buildEvaluatePane(): HTMLElement {
    const pane = el("section", { "data-testid": "pane-evaluate" });
    pane.appendChild(el("h2", {}, "Evaluate"));
    const form = el("div", { class: "eval-form" });
    form.appendChild(el("input", {
      "data-testid": "dataset-path",
      placeholder: "dataset JSONL path on the server",
    }));
    const mode = el("select", { "data-testid": "eval-mode" });
    mode.appendChild(el("option", { value: "judge" }, "judge"));
    mode.appendChild(el("option", { value: "exact" }, "exact"));
    form.appendChild(mode);
    const run = el("button", { "data-testid": "run-eval" }, "Run evaluation");
    run.addEventListener("click", () => void this.runEvaluate());
    form.appendChild(run);
    pane.appendChild(form);
    pane.appendChild(el("div", { "data-testid": "banner", class: "banner", style: "display:none" }));
    pane.appendChild(el("div", { "data-testid": "job-list" }));
    pane.appendChild(el("div", { "data-testid": "report" }));
    return pane;
  }

  async runEvaluate(): Promise<void> {
    const pane = this.panes.get("evaluate")!;
    const dataset = pane.querySelector<HTMLInputElement>("[data-testid=dataset-path]")!.value;
    const mode = pane.querySelector<HTMLSelectElement>("[data-testid=eval-mode]")!.value;
    this.banner(pane, "");
    if (!dataset) {
      this.banner(pane, "select a dataset first");
      return;
    }
    try {
      const job = await this.runJob(pane, "eval_answers", { dataset, mode });
      if (job.state !== "succeeded") return;
      const report = await this.client.getReport(job.job_id);
      this.renderReport(pane.querySelector<HTMLElement>("[data-testid=report]")!, report);
    } catch (err) {
      this.banner(pane, this.describeError(err));
    }
  }

  /** Pass-through rendering: every number comes from the report verbatim. */
  renderReport(target: HTMLElement, report: EvalReport): void {
    target.textContent = "";
    const answers = el("table", { "data-testid": "answers-table" });
    const row = (label: string, value: string) => {
      const tr = el("tr");
      tr.appendChild(el("th", {}, label));
      tr.appendChild(el("td", {}, value));
      answers.appendChild(tr);
    };
    row("dataset", report.dataset_id);
    row("mode", report.answers.mode);
    row("accuracy", formatPercent(report.answers.accuracy));
    row("invalid", String(report.answers.invalid_count));
    target.appendChild(answers);
    if (report.retrieval) {
      const retrieval = el("table", { "data-testid": "retrieval-table" });
      for (const [strategy, score] of Object.entries(report.retrieval.scores)) {
        const tr = el("tr");
        tr.appendChild(el("th", {}, strategy));
        tr.appendChild(el("td", {}, formatPercent(score)));
        if (strategy === report.retrieval.chosen) tr.setAttribute("class", "chosen");
        retrieval.appendChild(tr);
      }
      target.appendChild(retrieval);
    }
  }

  // -- Q&A -------------------------------------------------------------------

  private buildQaPane(): HTMLElement {
    const pane = el("section", { "data-testid": "pane-qa" });
    pane.appendChild(el("h2", {}, "Q&A"));
    const form = el("div", { class: "qa-form" });
    form.appendChild(el("input", { "data-testid": "qa-question", placeholder: "Ask a question" }));
    const ask = el("button", { "data-testid": "qa-ask" }, "Ask");
    ask.addEventListener("click", () => void this.ask());
    form.appendChild(ask);
    pane.appendChild(form);
    pane.appendChild(el("div", { "data-testid": "qa-history" }));
    return pane;
  }

  async ask(): Promise<void> {
    const pane = this.panes.get("qa")!;
    const input = pane.querySelector<HTMLInputElement>("[data-testid=qa-question]")!;
    const history = pane.querySelector<HTMLElement>("[data-testid=qa-history]")!;
    const question = input.value.trim();
    if (!question) return;
    try {
      const response = await this.client.answer(question);
      history.appendChild(this.buildTurn(question, response));
      input.value = "";
    } catch (err) {
      const card = el("div", { class: "error-card", "data-testid": "qa-error" });
      card.appendChild(el("p", {}, this.describeError(err)));
      const retry = el("button", {}, "Retry");
      retry.addEventListener("click", () => {
        card.remove();
        void this.ask();
      });
      card.appendChild(retry);
      history.appendChild(card);
    }
  }

  private buildTurn(question: string, response: AnswerResponse): HTMLElement {
    const turn = el("article", { class: "qa-turn", "data-testid": "qa-turn" });
    turn.appendChild(el("p", { class: "question" }, question));
    turn.appendChild(el("p", { class: "answer" }, response.answer));
    const contexts = [...response.contexts].sort((a, b) => a.rank - b.rank);
    for (const context of contexts) {
      const panel = el("details", { class: "context-panel", "data-testid": "context-panel" });
      panel.appendChild(el("summary", {},
        `#${context.rank} ${context.chunk_id} (score ${context.score.toFixed(4)})`));
      panel.appendChild(el("pre", {}, context.text));
      turn.appendChild(panel);
    }
    return turn;
  }

  private describeError(err: unknown): string {
    if (err instanceof ApiError) {
      if (err.status === 409) return `job already running: ${err.detail}`;
      if (err.status === 502) return `upstream model endpoint failed: ${err.detail}`;
      return err.message;
    }
    return String(err);
  }
}
