/**
 * Browser/Node client for a playlab platform.
 *
 * Usage mirrors the platform's message model: register one handler per
 * source, open a session for a game, join, and exchange messages with the
 * game manager. Delivery is an ordered long-poll stream; handlers fire in
 * exactly the order the server queued the messages, from a single poll
 * loop (never more than one poll request in flight).
 *
 *   const c = new Client();
 *   c.receive("manager", (msg) => { ... msg.topic, msg.params ... });
 *   c.receive("system", (msg) => { ... });
 *   await c.open(gameId);
 *   await c.join();
 *   await c.send("manager", "mgUChoice", 5);
 *
 * The ready signal is emitted automatically once per instance when the
 * page has finished loading (configurable for non-browser use).
 */

export type Source = "manager" | "system";

export interface WireMessage {
  topic: string;
  sender?: string;
  recipient?: string;
  params?: unknown;
  instanceId?: string;
  clientId?: string;
  broadcast?: boolean;
  [extension: string]: unknown;
}

export type Handler = (msg: WireMessage) => void;

export type ClientState = "idle" | "open" | "queued" | "playing" | "over" | "closed";

export class ClientApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(`${code}: ${message}`);
  }
}

export interface ClientOptions {
  /** Platform origin; empty string means same-origin (the usual case). */
  baseUrl?: string;
  /** Injectable fetch for tests. */
  fetchFn?: typeof fetch;
  /** Emit ready automatically when an instance starts (default true). */
  autoReady?: boolean;
  /** Resolves when UI assets are loaded; defaults to the window load event. */
  whenLoaded?: () => Promise<void>;
  /** Heartbeat period override in ms; null disables heartbeats. */
  heartbeatMs?: number | null;
  /** Pause before retrying after a failed poll, in ms. */
  pollRetryMs?: number;
}

function defaultWhenLoaded(): Promise<void> {
  if (typeof document === "undefined") {
    return Promise.resolve();
  }
  if (document.readyState === "complete") {
    return Promise.resolve();
  }
  return new Promise((resolve) => {
    window.addEventListener("load", () => resolve(), { once: true });
  });
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class Client {
  sessionId: string | null = null;
  gameId: string | null = null;
  instanceId: string | null = null;
  clientId: string | null = null;
  state: ClientState = "idle";

  private readonly base: string;
  private readonly fetchFn: typeof fetch;
  private readonly autoReady: boolean;
  private readonly whenLoaded: () => Promise<void>;
  private readonly heartbeatMs: number | null | undefined;
  private readonly pollRetryMs: number;

  private handlers: Partial<Record<Source, Handler>> = {};
  private cursor = 0;
  private pollActive = false;
  private stopped = false;
  private readySentFor: string | null = null;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;

  constructor(options: ClientOptions = {}) {
    this.base = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.autoReady = options.autoReady ?? true;
    this.whenLoaded = options.whenLoaded ?? defaultWhenLoaded;
    this.heartbeatMs = options.heartbeatMs;
    this.pollRetryMs = options.pollRetryMs ?? 1000;
  }

  /** Register the callback for one source; the newest registration wins. */
  receive(source: Source, handler: Handler): void {
    if (source !== "manager" && source !== "system") {
      throw new Error(`invalid source: ${String(source)} (use "manager" or "system")`);
    }
    this.handlers[source] = handler;
  }

  async open(
    gameId: string,
    credentials?: { username: string; password: string },
  ): Promise<Record<string, unknown>> {
    const body: Record<string, unknown> = { gameId };
    if (credentials) {
      body.username = credentials.username;
      body.password = credentials.password;
    }
    const info = await this.post("/api/session", body);
    this.sessionId = info.sessionId as string;
    this.gameId = gameId;
    this.state = "open";
    const interval =
      this.heartbeatMs !== undefined
        ? this.heartbeatMs
        : Math.max(1000, Number(info.heartbeatIntervalS ?? 5) * 1000);
    if (interval !== null) {
      this.heartbeatTimer = setInterval(() => {
        void this.post("/api/heartbeat", { sessionId: this.sessionId }).catch(() => undefined);
      }, interval);
    }
    this.startPolling();
    return info;
  }

  async join(): Promise<Record<string, unknown>> {
    const out = await this.post(`/api/game/${this.gameId}/join`, {
      sessionId: this.sessionId,
    });
    if (out.status === "queued") {
      this.state = "queued";
    }
    return out;
  }

  /**
   * Send one message to the game manager. Resolves once the platform has
   * relayed it and routed the GM's immediate replies. Payloads pass
   * through untouched.
   */
  async send(recipient: string, topic: string, params?: unknown): Promise<Record<string, unknown>> {
    try {
      return await this.post("/api/send", {
        sessionId: this.sessionId,
        recipient,
        topic,
        params,
      });
    } catch (err) {
      this.toSystem({
        topic: "error",
        sender: "system",
        params: { reason: "send_failed", detail: String(err) },
      });
      throw err;
    }
  }

  /** Signal that the UI is loaded. Sent at most once per instance. */
  async ready(): Promise<void> {
    if (this.instanceId === null || this.readySentFor === this.instanceId) {
      return;
    }
    this.readySentFor = this.instanceId;
    await this.post("/api/ready", { sessionId: this.sessionId });
  }

  close(): void {
    this.stopped = true;
    this.state = "closed";
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }

  // -- internals ------------------------------------------------------------

  private async api(path: string, init?: RequestInit): Promise<Record<string, unknown>> {
    const response = await this.fetchFn(this.base + path, init);
    let payload: Record<string, unknown> = {};
    try {
      payload = (await response.json()) as Record<string, unknown>;
    } catch {
      payload = {};
    }
    if (!response.ok) {
      const err = (payload.error ?? {}) as { code?: string; message?: string };
      throw new ClientApiError(
        response.status,
        err.code ?? "http_error",
        err.message ?? response.statusText,
      );
    }
    return payload;
  }

  private post(path: string, body: unknown): Promise<Record<string, unknown>> {
    return this.api(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  private startPolling(): void {
    if (!this.pollActive) {
      this.pollActive = true;
      void this.pollLoop();
    }
  }

  private async pollLoop(): Promise<void> {
    while (!this.stopped) {
      let payload: Record<string, unknown>;
      try {
        payload = await this.api(
          `/api/poll?session=${encodeURIComponent(this.sessionId ?? "")}&cursor=${this.cursor}`,
        );
      } catch (err) {
        if (this.stopped) {
          break;
        }
        if (err instanceof ClientApiError && err.status === 401) {
          this.state = "closed";
          this.toSystem({
            topic: "error",
            sender: "system",
            params: { reason: "session_lost" },
          });
          break;
        }
        await sleep(this.pollRetryMs);
        continue;
      }
      this.cursor = payload.cursor as number;
      for (const raw of payload.messages as WireMessage[]) {
        this.dispatch(raw);
      }
    }
    this.pollActive = false;
  }

  private dispatch(msg: WireMessage): void {
    if (msg.sender === "system") {
      this.bookkeep(msg);
    }
    const source: Source = msg.sender === "manager" ? "manager" : "system";
    const handler = this.handlers[source];
    if (handler) {
      handler(msg);
    }
  }

  private bookkeep(msg: WireMessage): void {
    switch (msg.topic) {
      case "queued":
        this.state = "queued";
        break;
      case "instance":
        this.instanceId = msg.instanceId ?? null;
        this.clientId = msg.clientId ?? null;
        this.state = "playing";
        if (this.autoReady) {
          void this.whenLoaded()
            .then(() => this.ready())
            .catch(() => undefined);
        }
        break;
      case "over":
        this.state = "over";
        break;
      case "drop":
      case "error":
        if (this.state === "playing" || this.state === "queued") {
          this.state = "over";
        }
        break;
      default:
        break;
    }
  }

  private toSystem(msg: WireMessage): void {
    const handler = this.handlers.system;
    if (handler) {
      handler(msg);
    }
  }
}
