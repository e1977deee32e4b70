import { SessionInfo, StreamMessage, TouchEventMessage } from "./types";

export async function createSession(base: string,
                                    config: object = {}): Promise<SessionInfo> {
  const r = await fetch(`${base}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(config),
  });
  if (!r.ok) throw new Error(`session create failed: ${r.status}`);
  return (await r.json()) as SessionInfo;
}

export async function postEvent(base: string, sid: number,
                                event: TouchEventMessage): Promise<void> {
  const r = await fetch(`${base}/sessions/${sid}/events`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(event),
  });
  if (!r.ok) throw new Error(`event rejected: ${r.status}`);
}

/** Reads the NDJSON tick stream, invoking onMessage per parsed line. */
export async function consumeStream(
  base: string,
  sid: number,
  onMessage: (msg: StreamMessage) => void,
  signal?: AbortSignal,
  limit?: number,
): Promise<void> {
  const url = `${base}/sessions/${sid}/stream`
    + (limit !== undefined ? `?limit=${limit}` : "");
  const r = await fetch(url, { signal });
  if (!r.ok || !r.body) throw new Error(`stream failed: ${r.status}`);
  const reader = r.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let nl;
    while ((nl = buffer.indexOf("\n")) >= 0) {
      const line = buffer.slice(0, nl).trim();
      buffer = buffer.slice(nl + 1);
      if (!line) continue;
      try {
        onMessage(JSON.parse(line) as StreamMessage);
      } catch {
        // malformed line: skip, the next tick supersedes it anyway
      }
    }
  }
}
