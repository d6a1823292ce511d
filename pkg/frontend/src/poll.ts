/** Job polling: 1 s interval while a job is moving, backing off when idle. */

import { ApiClient, JobView } from "./api.js";

export type Sleeper = (ms: number) => Promise<void>;

export const realSleep: Sleeper = (ms) =>
  new Promise((resolve) => setTimeout(resolve, ms));

export const BASE_INTERVAL_MS = 1000;
export const MAX_INTERVAL_MS = 5000;

/** Next poll delay: reset to 1 s on visible change, grow 1.5x while idle. */
export function nextInterval(current: number, changed: boolean): number {
  if (changed) return BASE_INTERVAL_MS;
  return Math.min(Math.round(current * 1.5), MAX_INTERVAL_MS);
}

export async function waitForJob(
  client: ApiClient,
  jobId: string,
  onUpdate: (job: JobView) => void,
  sleep: Sleeper = realSleep,
): Promise<JobView> {
  let interval = BASE_INTERVAL_MS;
  let lastSignature = "";
  for (;;) {
    const job = await client.getJob(jobId);
    const signature = `${job.state}:${job.progress}:${job.log_tail.length}`;
    onUpdate(job);
    if (job.state === "succeeded" || job.state === "failed") return job;
    interval = nextInterval(interval, signature !== lastSignature);
    lastSignature = signature;
    await sleep(interval);
  }
}
