/** Spawns the fixture service before the test run and tears it down after.
 * Tests read the base URL through vitest's inject("baseUrl"). */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import type { GlobalSetupContext } from "vitest/node";

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
  }
}

const PORT = 18731;

async function waitForHealth(baseUrl: string, timeoutMs = 90_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`fixture service never became healthy: ${lastError}`);
}

export default async function setup({ provide }: GlobalSetupContext) {
  const workdir = mkdtempSync(join(tmpdir(), "latentaug-ui-"));
  const script = resolve(__dirname, "serve_fixture.py");
  const child: ChildProcess = spawn("python3", [script, workdir, String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  const baseUrl = `http://127.0.0.1:${PORT}`;
  const exited = new Promise<never>((_, reject) => {
    child.on("exit", (code) =>
      reject(new Error(`fixture service exited early with code ${code}`)),
    );
  });
  await Promise.race([waitForHealth(baseUrl), exited]);
  provide("baseUrl", baseUrl);

  return () => {
    child.kill("SIGTERM");
    rmSync(workdir, { recursive: true, force: true });
  };
}
