/** Browser bootstrap: connect the console to the twin gateway. */

import { OperatorConsole } from "./console.js";
import type { SocketLike } from "./gateway.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("gateway") ?? "ws://127.0.0.1:8765";

const factory = (target: string): SocketLike => new WebSocket(target) as unknown as SocketLike;

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
const operatorConsole = new OperatorConsole(root, url, factory);
operatorConsole.start();

// countdowns and stamps tick even between pushes
setInterval(() => operatorConsole.render(), 500);
