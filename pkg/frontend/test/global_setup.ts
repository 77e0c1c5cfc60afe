/* Boots one review service for the whole vitest run: synthesizes a small
 * dataset plus an untrained model bundle into a temp dir, starts uvicorn on
 * a free port, and tears both down afterwards. Test files reach the server
 * through process.env.REVIEW_UI_BASE_URL (workers fork after this setup
 * finishes, so they inherit it).
 */

import { execFileSync, spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

const PYTHON = process.env.REVIEW_UI_PYTHON ?? "python3";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.once("error", reject);
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      srv.close(() => resolve(addr.port));
    });
  });
}

async function waitUntilUp(base: string, child: ChildProcess, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`test server exited early with code ${child.exitCode}`);
    }
    try {
      const resp = await fetch(base + "/api/cases");
      if (resp.ok) return;
      lastError = new Error(`HTTP ${resp.status}`);
    } catch (e) {
      lastError = e;
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`test server did not come up within ${timeoutMs} ms: ${String(lastError)}`);
}

export default async function setup(): Promise<() => void> {
  const here = path.dirname(fileURLToPath(import.meta.url));
  const dir = mkdtempSync(path.join(tmpdir(), "review-ui-"));
  execFileSync(PYTHON, [path.join(here, "fixture", "make_fixture.py"), dir], {
    stdio: "inherit",
  });

  const port = await freePort();
  const child = spawn(
    PYTHON,
    [
      "-m", "uvicorn",
      "--app-dir", path.join(here, "fixture"),
      "server_app:app",
      "--host", "127.0.0.1",
      "--port", String(port),
      "--log-level", "warning",
    ],
    {
      env: {
        ...process.env,
        REVIEW_DATA_DIR: path.join(dir, "data"),
        REVIEW_MODEL: path.join(dir, "model.params"),
        REVIEW_STORE: path.join(dir, "edits.jsonl"),
        REVIEW_RADIUS: "2", // matches the 160 px synthetic images
      },
      stdio: ["ignore", "inherit", "inherit"],
    },
  );

  const base = `http://127.0.0.1:${port}`;
  try {
    await waitUntilUp(base, child, 60_000);
  } catch (e) {
    child.kill("SIGTERM");
    rmSync(dir, { recursive: true, force: true });
    throw e;
  }
  process.env.REVIEW_UI_BASE_URL = base;

  return () => {
    child.kill("SIGTERM");
    rmSync(dir, { recursive: true, force: true });
  };
}
