/** Spawns a real platform + GM from the Python package for SDK tests. */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, mkdirSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const run = promisify(execFile);

export function getFreePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address() as net.AddressInfo;
      server.close(() => resolve(address.port));
    });
    server.on("error", reject);
  });
}

export async function waitUntil(
  check: () => boolean | Promise<boolean>,
  timeoutMs: number,
  label: string,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (await check()) {
      return;
    }
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${label}`);
    }
    await new Promise((r) => setTimeout(r, 50));
  }
}

async function reachable(url: string): Promise<boolean> {
  try {
    await fetch(url, { signal: AbortSignal.timeout(1000) });
    return true; // any HTTP answer means the socket is up
  } catch {
    return false;
  }
}

export interface GmSpec {
  module: string; // e.g. "playlab.gms.broadcast"
  args?: string[];
}

export class PlatformFixture {
  private processes: ChildProcess[] = [];
  dataDir = "";
  gameId = "";
  gmToken = "";
  port = 0;
  gmPort = 0;

  get url(): string {
    return `http://127.0.0.1:${this.port}`;
  }

  static async launch(options: { players: number; gm: GmSpec; name?: string }): Promise<PlatformFixture> {
    const fixture = new PlatformFixture();
    const work = mkdtempSync(join(tmpdir(), "playlab-sdk-"));
    fixture.dataDir = join(work, "data");

    await run("python3", ["-m", "playlab.cli", "init", "--data-dir", fixture.dataDir]);

    fixture.gmPort = await getFreePort();
    const gmArgs = ["-m", options.gm.module, "--port", String(fixture.gmPort), ...(options.gm.args ?? [])];
    fixture.spawnProcess("python3", gmArgs, work);
    await waitUntil(() => reachable(`http://127.0.0.1:${fixture.gmPort}/`), 15000, "GM server");

    const uiDir = join(work, "ui");
    mkdirSync(uiDir);
    writeFileSync(join(uiDir, "index.html"), "<html>ui</html>");
    const manifest = join(work, "game.toml");
    writeFileSync(
      manifest,
      [
        `name = ${JSON.stringify(options.name ?? "SDK Test Game")}`,
        'description = "spawned by the SDK test suite"',
        `required_players = ${options.players}`,
        "[gm]",
        `url = "http://127.0.0.1:${fixture.gmPort}/"`,
        "[assets]",
        'bundle_dir = "ui"',
        "",
      ].join("\n"),
    );
    const registered = await run("python3", [
      "-m",
      "playlab.cli",
      "game",
      "register",
      "--manifest",
      manifest,
      "--data-dir",
      fixture.dataDir,
    ]);
    fixture.gameId = /registered draft game (g\w+)/.exec(registered.stdout)![1];
    fixture.gmToken = /GM push token: (\S+)/.exec(registered.stdout)![1];
    await run("python3", [
      "-m",
      "playlab.cli",
      "game",
      "publish",
      fixture.gameId,
      "--data-dir",
      fixture.dataDir,
    ]);

    fixture.port = await getFreePort();
    fixture.spawnProcess(
      "python3",
      ["-m", "playlab.cli", "serve", "--data-dir", fixture.dataDir, "--port", String(fixture.port)],
      work,
    );
    await waitUntil(() => reachable(`${fixture.url}/healthz`), 15000, "platform server");
    return fixture;
  }

  private spawnProcess(cmd: string, args: string[], cwd: string): void {
    const child = spawn(cmd, args, { cwd, stdio: ["ignore", "pipe", "pipe"] });
    child.stderr?.on("data", () => undefined); // keep the pipe drained
    child.stdout?.on("data", () => undefined);
    this.processes.push(child);
  }

  async pushOver(instanceId: string, scores?: Record<string, number>): Promise<Response> {
    const message: Record<string, unknown> = {
      recipient: "system",
      topic: "over",
      instanceId,
    };
    if (scores) {
      message.params = scores;
    }
    const body = new URLSearchParams({ message: JSON.stringify(message) });
    return fetch(`${this.url}/gm/push`, {
      method: "POST",
      headers: { "X-Gm-Token": this.gmToken },
      body,
    });
  }

  async close(): Promise<void> {
    for (const child of this.processes) {
      child.kill("SIGTERM");
    }
    await new Promise((r) => setTimeout(r, 300));
    for (const child of this.processes) {
      if (child.exitCode === null) {
        child.kill("SIGKILL");
      }
    }
  }
}
