import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { App, EMBED_DEFAULTS, LLM_DEFAULTS, formatPercent } from "../src/app.js";
import { BASE_INTERVAL_MS, MAX_INTERVAL_MS, nextInterval } from "../src/poll.js";
import { MockService } from "./mock_service.js";

const instantSleep = async (_ms: number) => {};

function makeApp(service: MockService): App {
  vi.stubGlobal("fetch", service.fetch);
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new App(root, new ApiClient(""), instantSleep);
}

let service: MockService;
let app: App;

beforeEach(() => {
  service = new MockService();
  app = makeApp(service);
});

afterEach(() => {
  vi.unstubAllGlobals();
  document.body.textContent = "";
});

function q<T extends Element>(selector: string): T {
  const node = app.root.querySelector<T>(selector);
  if (!node) throw new Error(`missing ${selector}`);
  return node;
}

describe("recorded session", () => {
  it("drives all four tabs to success states", async () => {
    // Tab 1: embedding fine-tune chain.
    await app.startEmbedChain();
    expect(q("[data-testid=pane-embed] [data-testid=chain-status]").textContent)
      .toBe("chain succeeded");
    const chainJobs = [...service.jobs.values()].map((j) => j.kind);
    expect(chainJobs).toEqual(["ingest", "datagen", "export_ft"]);
    expect([...service.jobs.values()].every((j) => j.state === "succeeded")).toBe(true);

    // Tab 2: LLM fine-tune export.
    app.showTab("llm");
    await app.startLlmExport();
    expect(q("[data-testid=pane-llm] [data-testid=chain-status]").textContent)
      .toBe("export succeeded");

    // Tab 3: evaluate.
    app.showTab("evaluate");
    q<HTMLInputElement>("[data-testid=dataset-path]").value = "/data/eval.jsonl";
    await app.runEvaluate();
    const answersTable = q("[data-testid=answers-table]");
    expect(answersTable.textContent).toContain("75.0%");
    expect(answersTable.textContent).toContain("1");

    // Tab 4: Q&A.
    app.showTab("qa");
    q<HTMLInputElement>("[data-testid=qa-question]").value = "what is in doc 1?";
    await app.ask();
    const turns = app.root.querySelectorAll("[data-testid=qa-turn]");
    expect(turns.length).toBe(1);
    expect(turns[0].textContent).toContain("echo: what is in doc 1?");

    // Only documented /api routes were called.
    for (const { url } of service.requests) {
      expect(url).toMatch(/^\/api\/(jobs|answer|strategy|config)/);
    }
  });
});

describe("embedding fine-tune tab", () => {
  it("prefills the trainer's default hyperparameters", () => {
    const lr = q<HTMLInputElement>("[data-testid=pane-embed] [data-testid=param-learningRate]");
    expect(lr.value).toBe(EMBED_DEFAULTS.learningRate);
    expect(q<HTMLInputElement>("[data-testid=pane-embed] [data-testid=param-batchSize]").value)
      .toBe("16");
    expect(q<HTMLInputElement>("[data-testid=pane-embed] [data-testid=param-epochs]").value)
      .toBe("3");
    expect(q<HTMLInputElement>("[data-testid=pane-embed] [data-testid=param-warmupPercent]").value)
      .toBe("10");
  });

  it("renders a 409 as an inline banner without retrying", async () => {
    service.activeKinds.add("ingest");
    await app.startEmbedChain();
    const banner = q("[data-testid=pane-embed] [data-testid=banner]");
    expect(banner.textContent).toContain("already running");
    const creations = service.requests.filter(
      (r) => r.method === "POST" && r.url.endsWith("/api/jobs"));
    expect(creations.length).toBe(1); // no silent retry of job creation
  });

  it("stops the chain at the first failed job", async () => {
    service.failKinds.add("datagen");
    await app.startEmbedChain();
    expect(q("[data-testid=pane-embed] [data-testid=chain-status]").textContent)
      .toBe("failed at datagen");
    const kinds = [...service.jobs.values()].map((j) => j.kind);
    expect(kinds).toEqual(["ingest", "datagen"]); // export_ft never launched
    expect(q("[data-testid=job-datagen] [data-testid=log-tail]").textContent)
      .toContain("induced failure");
  });
});

describe("llm fine-tune tab", () => {
  it("prefills LoRA defaults", () => {
    expect(q<HTMLInputElement>("[data-testid=pane-llm] [data-testid=param-loraRank]").value)
      .toBe("32");
    expect(q<HTMLInputElement>("[data-testid=pane-llm] [data-testid=param-learningRate]").value)
      .toBe(LLM_DEFAULTS.learningRate);
    expect(q<HTMLInputElement>("[data-testid=pane-llm] [data-testid=param-batchSize]").value)
      .toBe("64");
  });
});

describe("evaluate tab", () => {
  it("requires a dataset before sending any request", async () => {
    await app.runEvaluate();
    expect(q("[data-testid=pane-evaluate] [data-testid=banner]").textContent)
      .toContain("select a dataset");
    expect(service.requests.length).toBe(0);
  });

  it("renders per-strategy scores with the chosen row marked", async () => {
    q<HTMLInputElement>("[data-testid=dataset-path]").value = "/data/eval.jsonl";
    await app.runEvaluate();
    const retrieval = q("[data-testid=retrieval-table]");
    expect(retrieval.textContent).toContain("hybrid");
    expect(retrieval.textContent).toContain("100.0%");
    expect(retrieval.querySelector("tr.chosen")!.textContent).toContain("hybrid");
  });

  it("hides the retrieval table when the report has none", async () => {
    service.report.retrieval = null;
    q<HTMLInputElement>("[data-testid=dataset-path]").value = "/data/eval.jsonl";
    await app.runEvaluate();
    expect(app.root.querySelector("[data-testid=retrieval-table]")).toBeNull();
    expect(app.root.querySelector("[data-testid=answers-table]")).not.toBeNull();
  });
});

describe("qa tab", () => {
  it("renders one panel per returned context, in rank order", async () => {
    q<HTMLInputElement>("[data-testid=qa-question]").value = "q1";
    await app.ask();
    const panels = app.root.querySelectorAll("[data-testid=context-panel]");
    expect(panels.length).toBe(service.contexts.length);
    const summaries = [...panels].map((p) => p.querySelector("summary")!.textContent!);
    expect(summaries[0]).toContain("#1 doc-0001");
    expect(summaries[1]).toContain("#2 doc-0007");
    expect(summaries[2]).toContain("#3 doc-0003");
  });

  it("keeps session history across questions", async () => {
    for (const question of ["first?", "second?"]) {
      q<HTMLInputElement>("[data-testid=qa-question]").value = question;
      await app.ask();
    }
    const turns = [...app.root.querySelectorAll("[data-testid=qa-turn]")];
    expect(turns.length).toBe(2);
    expect(turns[0].textContent).toContain("first?");
    expect(turns[1].textContent).toContain("second?");
  });

  it("renders a retryable error card on 502", async () => {
    service.answerStatus = 502;
    q<HTMLInputElement>("[data-testid=qa-question]").value = "q?";
    await app.ask();
    const card = q("[data-testid=qa-error]");
    expect(card.textContent).toContain("upstream");
    expect(card.querySelector("button")).not.toBeNull();
  });
});

describe("display helpers", () => {
  it("formats fractions as percentages", () => {
    expect(formatPercent(0.75)).toBe("75.0%");
    expect(formatPercent(1)).toBe("100.0%");
    expect(formatPercent(0)).toBe("0.0%");
  });

  it("polling backs off while idle and resets on change", () => {
    let interval = BASE_INTERVAL_MS;
    interval = nextInterval(interval, false);
    expect(interval).toBe(1500);
    interval = nextInterval(interval, false);
    expect(interval).toBe(2250);
    for (let i = 0; i < 10; i++) interval = nextInterval(interval, false);
    expect(interval).toBe(MAX_INTERVAL_MS);
    expect(nextInterval(interval, true)).toBe(BASE_INTERVAL_MS);
  });
});
