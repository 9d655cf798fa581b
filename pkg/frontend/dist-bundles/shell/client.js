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
export class ClientApiError extends Error {
    constructor(status, code, message) {
        super(`${code}: ${message}`);
        this.status = status;
        this.code = code;
    }
}
function defaultWhenLoaded() {
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
const sleep = (ms) => new Promise((r) => setTimeout(r, ms));
export class Client {
    constructor(options = {}) {
        this.sessionId = null;
        this.gameId = null;
        this.instanceId = null;
        this.clientId = null;
        this.state = "idle";
        this.handlers = {};
        this.cursor = 0;
        this.pollActive = false;
        this.stopped = false;
        this.readySentFor = null;
        this.heartbeatTimer = null;
        this.base = (options.baseUrl ?? "").replace(/\/$/, "");
        this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
        this.autoReady = options.autoReady ?? true;
        this.whenLoaded = options.whenLoaded ?? defaultWhenLoaded;
        this.heartbeatMs = options.heartbeatMs;
        this.pollRetryMs = options.pollRetryMs ?? 1000;
    }
    /** Register the callback for one source; the newest registration wins. */
    receive(source, handler) {
        if (source !== "manager" && source !== "system") {
            throw new Error(`invalid source: ${String(source)} (use "manager" or "system")`);
        }
        this.handlers[source] = handler;
    }
    async open(gameId, credentials) {
        const body = { gameId };
        if (credentials) {
            body.username = credentials.username;
            body.password = credentials.password;
        }
        const info = await this.post("/api/session", body);
        this.sessionId = info.sessionId;
        this.gameId = gameId;
        this.state = "open";
        const interval = this.heartbeatMs !== undefined
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
    async join() {
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
    async send(recipient, topic, params) {
        try {
            return await this.post("/api/send", {
                sessionId: this.sessionId,
                recipient,
                topic,
                params,
            });
        }
        catch (err) {
            this.toSystem({
                topic: "error",
                sender: "system",
                params: { reason: "send_failed", detail: String(err) },
            });
            throw err;
        }
    }
    /** Signal that the UI is loaded. Sent at most once per instance. */
    async ready() {
        if (this.instanceId === null || this.readySentFor === this.instanceId) {
            return;
        }
        this.readySentFor = this.instanceId;
        await this.post("/api/ready", { sessionId: this.sessionId });
    }
    close() {
        this.stopped = true;
        this.state = "closed";
        if (this.heartbeatTimer !== null) {
            clearInterval(this.heartbeatTimer);
            this.heartbeatTimer = null;
        }
    }
    // -- internals ------------------------------------------------------------
    async api(path, init) {
        const response = await this.fetchFn(this.base + path, init);
        let payload = {};
        try {
            payload = (await response.json());
        }
        catch {
            payload = {};
        }
        if (!response.ok) {
            const err = (payload.error ?? {});
            throw new ClientApiError(response.status, err.code ?? "http_error", err.message ?? response.statusText);
        }
        return payload;
    }
    post(path, body) {
        return this.api(path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
    }
    startPolling() {
        if (!this.pollActive) {
            this.pollActive = true;
            void this.pollLoop();
        }
    }
    async pollLoop() {
        while (!this.stopped) {
            let payload;
            try {
                payload = await this.api(`/api/poll?session=${encodeURIComponent(this.sessionId ?? "")}&cursor=${this.cursor}`);
            }
            catch (err) {
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
            this.cursor = payload.cursor;
            for (const raw of payload.messages) {
                this.dispatch(raw);
            }
        }
        this.pollActive = false;
    }
    dispatch(msg) {
        if (msg.sender === "system") {
            this.bookkeep(msg);
        }
        const source = msg.sender === "manager" ? "manager" : "system";
        const handler = this.handlers[source];
        if (handler) {
            handler(msg);
        }
    }
    bookkeep(msg) {
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
    toSystem(msg) {
        const handler = this.handlers.system;
        if (handler) {
            handler(msg);
        }
    }
}
