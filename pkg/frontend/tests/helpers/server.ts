/** Spawns the Python review service preloaded with the demo replay run. */

import { spawn, type ChildProcess } from "node:child_process";
import path from "node:path";
import { fileURLToPath } from "node:url";

export interface FixtureServer {
  baseUrl: string;
  stop(): Promise<void>;
}

export async function startFixtureServer(): Promise<FixtureServer> {
  const here = path.dirname(fileURLToPath(import.meta.url));
  const script = path.join(here, "fixture_server.py");
  const child = spawn("python3", [script], {
    stdio: ["ignore", "pipe", "pipe"],
  });

  const port = await waitForPort(child);
  const baseUrl = `http://127.0.0.1:${port}`;
  await waitUntilResponsive(`${baseUrl}/api/runs`);

  return {
    baseUrl,
    stop: () =>
      new Promise<void>((resolve) => {
        child.once("exit", () => resolve());
        child.kill("SIGTERM");
        const hardKill = setTimeout(() => child.kill("SIGKILL"), 3000);
        hardKill.unref();
      }),
  };
}

function waitForPort(child: ChildProcess): Promise<number> {
  return new Promise((resolve, reject) => {
    let stdout = "";
    let stderr = "";
    const fail = (reason: string) =>
      reject(
        new Error(`fixture server did not start: ${reason}\n${stderr.trim()}`)
      );
    child.stdout?.on("data", (chunk: Buffer) => {
      stdout += chunk.toString();
      const match = stdout.match(/^LISTENING (\d+)$/m);
      if (match) resolve(Number(match[1]));
    });
    child.stderr?.on("data", (chunk: Buffer) => {
      stderr += chunk.toString();
    });
    child.once("error", (error) => fail(error.message));
    child.once("exit", (code) => fail(`exited with ${code}`));
  });
}

async function waitUntilResponsive(url: string): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(url);
      if (response.ok) {
        await response.arrayBuffer(); // drain
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`service at ${url} never became responsive`);
}
