/**
 * Gateway client: one WebSocket, auto-reconnect, at-most-one send per
 * user action (idempotency keys absorb double-clicks).
 */

import type { GatewayMessage, OutboundMessage } from "./types.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror?: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface GatewayEvents {
  onMessage: (message: GatewayMessage) => void;
  onStatus?: (connected: boolean) => void;
}

export class GatewayClient {
  private socket: SocketLike | null = null;
  private inflight = new Set<string>();
  private closed = false;
  private reconnectDelayMs = 250;

  constructor(
    private url: string,
    private events: GatewayEvents,
    private factory: SocketFactory,
    private reconnect = true,
  ) {}

  connect(): void {
    this.closed = false;
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onerror = () => {
      // connection failures surface through onclose; never unhandled
    };
    socket.onopen = () => {
      this.inflight.clear();
      this.events.onStatus?.(true);
    };
    socket.onmessage = (ev) => {
      let parsed: GatewayMessage;
      try {
        parsed = JSON.parse(String(ev.data)) as GatewayMessage;
      } catch {
        return;
      }
      this.events.onMessage(parsed);
    };
    socket.onclose = () => {
      this.events.onStatus?.(false);
      this.socket = null;
      if (!this.closed && this.reconnect) {
        setTimeout(() => {
          if (!this.closed) this.connect();
        }, this.reconnectDelayMs);
      }
    };
  }

  close(): void {
    this.closed = true;
    const socket = this.socket;
    this.socket = null;
    if (socket) {
      // a closing socket must not deliver stragglers after the next
      // connection starts feeding the console
      socket.onmessage = null;
      socket.onopen = null;
      socket.close();
    }
  }

  /**
   * Send one message per action key. While a key is in flight, repeat
   * clicks are ignored; the key clears once any gateway message arrives
   * (the log/snapshot echo is the confirmation channel).
   */
  sendAction(key: string, message: OutboundMessage): boolean {
    if (!this.socket || this.inflight.has(key)) {
      return false;
    }
    this.inflight.add(key);
    this.socket.send(JSON.stringify(message));
    return true;
  }

  settle(key: string): void {
    this.inflight.delete(key);
  }

  settleAll(): void {
    this.inflight.clear();
  }

  get isConnected(): boolean {
    return this.socket !== null;
  }
}
