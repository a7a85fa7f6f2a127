/**
 * The operator console: fleet panels with preset-mission buttons, the
 * message feed, a top-down arena map standing in for the camera wall,
 * per-platform focus pages with arm ghosting, and plan approve/reject
 * cards with an auto-approval countdown.
 *
 * Rendering is a pure function of ConsoleState; all interaction goes
 * through one delegated click/input handler so re-renders never lose
 * listeners.
 */

import { GatewayClient, type SocketFactory } from "./gateway.js";
import {
  applyMessage,
  desiredFor,
  initialState,
  openDecisions,
  platformBusy,
  platformFaulted,
  sessionStale,
  setDesired,
  type ConsoleState,
} from "./state.js";
import type { GatewayMessage, SnapshotMessage } from "./types.js";

const CAMERA_VIEWS = [
  { name: "overview", box: [0, 0, 1, 1] },
  { name: "inspection bays", box: [0.5, 0, 0.5, 1] },
  { name: "home + depot", box: [0, 0, 0.5, 1] },
];

export class OperatorConsole {
  state: ConsoleState = initialState();
  client: GatewayClient;
  cameraIndex = 0;
  /** corrosion-mission sequencer: null = idle, otherwise phase cursor */
  missionCursor: number | null = null;
  private donesSeen = new Set<string>();

  constructor(
    private root: HTMLElement,
    url: string,
    factory: SocketFactory,
    private now: () => number = () => Date.now(),
  ) {
    this.client = new GatewayClient(
      url,
      {
        onMessage: (m) => this.onMessage(m),
        onStatus: (up) => this.onStatus(up),
      },
      factory,
    );
  }

  start(): void {
    this.root.addEventListener("click", (ev) => this.onClick(ev));
    this.root.addEventListener("input", (ev) => this.onInput(ev));
    this.client.connect();
    this.render();
  }

  stop(): void {
    this.client.close();
  }

  // -- events --

  private onStatus(connected: boolean): void {
    this.state = { ...this.state, connected };
    this.render();
  }

  private onMessage(message: GatewayMessage): void {
    this.state = applyMessage(this.state, message, this.now());
    if (message.type === "log" || message.type === "nack") {
      this.client.settleAll();
    }
    if (message.type === "log" && message.entry.kind === "DECISION") {
      const entry = message.entry as Record<string, unknown>;
      if (entry["name"] === "mission_done") {
        this.donesSeen.add(`${entry["platform"]}:${entry["trigger"]}`);
        this.advanceMission();
      }
    }
    this.render();
  }

  private onClick(ev: Event): void {
    const target = ev.target as HTMLElement | null;
    if (!target) return;
    const action = target.getAttribute("data-action");
    if (!action) return;
    const platform = target.getAttribute("data-platform") ?? "";
    switch (action) {
      case "preset": {
        const char = target.getAttribute("data-char") ?? "";
        this.client.sendAction(`trigger:${platform}:${char}`, {
          type: "trigger",
          platform,
          char,
        });
        break;
      }
      case "corrosion-mission":
        this.startMission();
        break;
      case "camera-toggle":
        this.cameraIndex = (this.cameraIndex + 1) % CAMERA_VIEWS.length;
        break;
      case "focus":
        this.state = { ...this.state, focusPlatform: platform };
        break;
      case "close-focus":
        this.state = { ...this.state, focusPlatform: null };
        break;
      case "send-arm": {
        const desired = desiredFor(this.state, platform);
        const args = Object.keys(desired)
          .sort()
          .map((joint) => `${joint}=${desired[joint]}`)
          .join(",");
        if (args) {
          this.client.sendAction(`arm:${platform}`, {
            type: "command",
            platform,
            verb: "ARM",
            args: [args],
          });
        }
        break;
      }
      case "approve":
      case "reject": {
        const planId = target.getAttribute("data-plan") ?? "";
        const card = this.state.pendingDecisions.get(planId);
        if (card?.resolved) {
          this.state = {
            ...this.state,
            toasts: [...this.state.toasts, `already ${card.resolution}`],
          };
          break;
        }
        this.client.sendAction(`${action}:${planId}`, {
          type: action as "approve" | "reject",
          plan_id: planId,
        });
        break;
      }
    }
    this.render();
  }

  private onInput(ev: Event): void {
    const target = ev.target as HTMLInputElement | null;
    if (!target || target.getAttribute("data-action") !== "joint") return;
    const platform = target.getAttribute("data-platform")!;
    const joint = target.getAttribute("data-joint")!;
    this.state = setDesired(this.state, platform, joint, Number(target.value));
    this.render();
  }

  // -- corrosion mission sequencing --

  startMission(): void {
    if (this.missionCursor !== null || !this.state.snapshot) return;
    this.missionCursor = 0;
    this.donesSeen.clear();
    this.dispatchPhase();
  }

  private dispatchPhase(): void {
    const phases = this.state.snapshot?.mission_phases ?? [];
    if (this.missionCursor === null) return;
    if (this.missionCursor >= phases.length) {
      this.missionCursor = null;
      return;
    }
    const phase = phases[this.missionCursor];
    for (const platform of Object.keys(phase.triggers).sort()) {
      const char = phase.triggers[platform];
      this.client.sendAction(`trigger:${platform}:${char}`, {
        type: "trigger",
        platform,
        char,
      });
    }
  }

  private advanceMission(): void {
    const phases = this.state.snapshot?.mission_phases ?? [];
    if (this.missionCursor === null || this.missionCursor >= phases.length) return;
    const phase = phases[this.missionCursor];
    const complete = Object.entries(phase.triggers).every(([pid, char]) =>
      this.donesSeen.has(`${pid}:${char}`),
    );
    if (complete) {
      this.missionCursor += 1;
      this.donesSeen.clear();
      this.dispatchPhase();
    }
  }

  // -- rendering --

  render(): void {
    const doc = this.root.ownerDocument!;
    this.root.innerHTML = "";
    this.root.appendChild(this.renderHeader(doc));
    const snapshot = this.state.snapshot;
    if (!snapshot) return;
    if (this.state.focusPlatform) {
      this.root.appendChild(this.renderFocus(doc, snapshot, this.state.focusPlatform));
    } else {
      this.root.appendChild(this.renderFleet(doc, snapshot));
      this.root.appendChild(this.renderMap(doc, snapshot));
    }
    this.root.appendChild(this.renderDecisions(doc, snapshot));
    this.root.appendChild(this.renderFeed(doc));
    this.root.appendChild(this.renderToasts(doc));
  }

  private el(
    doc: Document,
    tag: string,
    attrs: Record<string, string | null> = {},
    text = "",
  ): HTMLElement {
    const svgTags = new Set(["svg", "circle", "rect", "text", "g", "line"]);
    const node = svgTags.has(tag)
      ? (doc.createElementNS("http://www.w3.org/2000/svg", tag) as unknown as HTMLElement)
      : doc.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
      if (value !== null) node.setAttribute(key, value);
    }
    if (text) node.textContent = text;
    return node;
  }

  private renderHeader(doc: Document): HTMLElement {
    const header = this.el(doc, "header", { id: "status" });
    const simTime = this.state.snapshot?.world.sim_time ?? 0;
    header.appendChild(
      this.el(
        doc,
        "span",
        { class: this.state.connected ? "status-up" : "status-down" },
        this.state.connected ? "connected" : "disconnected",
      ),
    );
    header.appendChild(this.el(doc, "span", { id: "sim-time" }, `t=${simTime.toFixed(1)}s`));
    const mission = this.el(doc, "button", {
      id: "corrosion-mission",
      "data-action": "corrosion-mission",
      disabled: this.missionCursor !== null || !this.state.snapshot ? "" : null,
    });
    mission.textContent = "start corrosion inspection mission";
    header.appendChild(mission);
    return header;
  }

  private renderFleet(doc: Document, snapshot: SnapshotMessage): HTMLElement {
    const section = this.el(doc, "section", { id: "fleet" });
    for (const pid of Object.keys(snapshot.platforms).sort()) {
      const info = snapshot.platforms[pid];
      const robot = snapshot.world.robots[pid];
      const stale = sessionStale(this.state, pid) || !this.state.connected;
      const panel = this.el(doc, "article", {
        class: `platform-panel${stale ? " stale" : ""}`,
        "data-platform": pid,
      });
      panel.appendChild(this.el(doc, "h3", {}, info.display_name));
      if (stale) {
        panel.appendChild(this.el(doc, "span", { class: "stale-badge" }, "Stale"));
      }
      if (platformFaulted(this.state, pid)) {
        panel.appendChild(
          this.el(
            doc,
            "div",
            { class: "failure-banner" },
            `FAILURE: ${pid} is ${robot.state}`,
          ),
        );
      }
      const stamp = `@${robot.last_update.toFixed(1)}s`;
      panel.appendChild(this.el(doc, "div", { class: "state" }, `${robot.state} ${stamp}`));
      panel.appendChild(this.el(doc, "div", { class: "battery" }, `battery ${robot.battery}%`));
      panel.appendChild(
        this.el(
          doc,
          "div",
          { class: "position" },
          `at (${robot.position[0].toFixed(2)}, ${robot.position[1].toFixed(2)}) ${stamp}`,
        ),
      );
      panel.appendChild(
        this.el(doc, "div", { class: "mission" }, robot.mission ? `mission ${robot.mission}` : "no mission"),
      );
      const pending = snapshot.pending_missions[pid];
      if (pending) {
        panel.appendChild(this.el(doc, "span", { class: "pending-badge" }, `pending ${pending}`));
      }
      const busy = platformBusy(this.state, pid);
      for (const char of Object.keys(info.presets).sort()) {
        panel.appendChild(
          this.el(
            doc,
            "button",
            {
              class: "preset-btn",
              "data-action": "preset",
              "data-platform": pid,
              "data-char": char,
              disabled: busy ? "" : null,
            },
            `${char}: ${info.presets[char]}`,
          ),
        );
      }
      panel.appendChild(
        this.el(
          doc,
          "button",
          { class: "focus-link", "data-action": "focus", "data-platform": pid },
          "focus page",
        ),
      );
      section.appendChild(panel);
    }
    return section;
  }

  private renderMap(doc: Document, snapshot: SnapshotMessage): HTMLElement {
    const arena = (snapshot as unknown as { arena: { width: number; height: number; locations: Record<string, [number, number]> } }).arena;
    const section = this.el(doc, "section", { id: "map" });
    const view = CAMERA_VIEWS[this.cameraIndex];
    section.appendChild(
      this.el(
        doc,
        "button",
        { id: "camera-toggle", "data-action": "camera-toggle" },
        `camera: ${view.name}`,
      ),
    );
    const [fx, fy, fw, fh] = view.box;
    const svg = this.el(doc, "svg", {
      id: "arena-svg",
      viewBox: `${fx * arena.width} ${fy * arena.height} ${fw * arena.width} ${fh * arena.height}`,
      width: "480",
      height: "384",
    });
    for (const [name, [lx, ly]] of Object.entries(arena.locations)) {
      const marker = this.el(doc, "circle", {
        class: "location",
        "data-name": name,
        cx: String(lx),
        cy: String(arena.height - ly),
        r: "0.12",
      });
      svg.appendChild(marker);
    }
    for (const [aid, asset] of Object.entries(snapshot.world.assets)) {
      svg.appendChild(
        this.el(doc, "rect", {
          class: "asset",
          "data-name": aid,
          x: String(asset.position[0] - 0.2),
          y: String(arena.height - asset.position[1] - 0.2),
          width: "0.4",
          height: "0.4",
        }),
      );
    }
    for (const [iid, item] of Object.entries(snapshot.world.items)) {
      const at =
        item.position ??
        (item.carried_by ? snapshot.world.robots[item.carried_by].position : null);
      if (!at) continue;
      svg.appendChild(
        this.el(doc, "circle", {
          class: `item${item.carried_by ? " carried" : ""}`,
          "data-name": iid,
          cx: String(at[0]),
          cy: String(arena.height - at[1]),
          r: "0.15",
        }),
      );
    }
    for (const [pid, robot] of Object.entries(snapshot.world.robots)) {
      const group = this.el(doc, "g", { class: "robot", "data-platform": pid });
      group.appendChild(
        this.el(doc, "circle", {
          cx: String(robot.position[0]),
          cy: String(arena.height - robot.position[1]),
          r: "0.25",
          class: `robot-dot state-${robot.state.toLowerCase()}`,
        }),
      );
      const label = this.el(doc, "text", {
        x: String(robot.position[0] + 0.3),
        y: String(arena.height - robot.position[1]),
        "font-size": "0.35",
      });
      label.textContent = pid;
      group.appendChild(label);
      svg.appendChild(group);
    }
    section.appendChild(svg);
    return section;
  }

  private renderFocus(doc: Document, snapshot: SnapshotMessage, pid: string): HTMLElement {
    const info = snapshot.platforms[pid];
    const robot = snapshot.world.robots[pid];
    const section = this.el(doc, "section", { id: "focus", "data-platform": pid });
    section.appendChild(this.el(doc, "h2", {}, `${info.display_name} focus`));
    section.appendChild(
      this.el(doc, "button", { id: "close-focus", "data-action": "close-focus" }, "back"),
    );
    if (platformFaulted(this.state, pid)) {
      section.appendChild(
        this.el(doc, "div", { class: "failure-banner" }, `FAILURE: ${pid} is ${robot.state}`),
      );
    }
    section.appendChild(
      this.el(doc, "div", { class: "state" }, `${robot.state} @${robot.last_update.toFixed(1)}s`),
    );
    const joints = Object.keys(info.arm_joints).sort();
    if (joints.length === 0) {
      section.appendChild(this.el(doc, "p", { class: "no-arms" }, "no articulated arms"));
      return section;
    }
    const desired = desiredFor(this.state, pid);
    const ghost = robot.arm_angles;
    const list = this.el(doc, "div", { id: "ghosting" });
    for (const joint of joints) {
      const [lo, hi] = info.arm_joints[joint];
      const row = this.el(doc, "div", { class: "joint-row", "data-joint": joint });
      row.appendChild(this.el(doc, "label", {}, joint));
      row.appendChild(
        this.el(doc, "input", {
          type: "range",
          class: "joint-slider",
          "data-action": "joint",
          "data-platform": pid,
          "data-joint": joint,
          min: String(lo),
          max: String(hi),
          value: String(desired[joint] ?? 0),
        }),
      );
      row.appendChild(
        this.el(
          doc,
          "span",
          { class: "desired-val", "data-joint": joint },
          `desired ${desired[joint] ?? 0}°`,
        ),
      );
      row.appendChild(
        this.el(
          doc,
          "span",
          { class: "ghost-val", "data-joint": joint },
          `ghost ${ghost[joint] ?? 0}°`,
        ),
      );
      list.appendChild(row);
    }
    section.appendChild(list);
    section.appendChild(
      this.el(
        doc,
        "button",
        { id: "send-arm", "data-action": "send-arm", "data-platform": pid },
        "send arm setpoints",
      ),
    );
    return section;
  }

  private renderDecisions(doc: Document, snapshot: SnapshotMessage): HTMLElement {
    const section = this.el(doc, "section", { id: "decisions" });
    const simTime = snapshot.world.sim_time;
    for (const card of this.state.pendingDecisions.values()) {
      const plan = card.plan;
      const node = this.el(doc, "article", {
        class: `decision-card${card.resolved ? " resolved" : ""}`,
        "data-plan": plan.plan_id,
      });
      node.appendChild(
        this.el(doc, "h4", {}, `${plan.plan_id}: ${plan.rule} (${plan.code} on ${plan.platform})`),
      );
      const tasks = this.el(doc, "ul", { class: "plan-tasks" });
      for (const task of plan.tasks) {
        tasks.appendChild(
          this.el(doc, "li", {}, `${task.verb} -> ${task.assignee ?? "operator"}`),
        );
      }
      node.appendChild(tasks);
      if (card.resolved) {
        node.appendChild(
          this.el(doc, "div", { class: "resolution" }, `resolved: ${card.resolution}`),
        );
      } else {
        const remaining =
          plan.deadline !== null ? Math.max(0, plan.deadline - simTime) : 0;
        node.appendChild(
          this.el(
            doc,
            "div",
            { class: "countdown" },
            `auto-approves in ${remaining.toFixed(1)}s`,
          ),
        );
        node.appendChild(
          this.el(
            doc,
            "button",
            { class: "approve-btn", "data-action": "approve", "data-plan": plan.plan_id },
            "approve",
          ),
        );
        node.appendChild(
          this.el(
            doc,
            "button",
            { class: "reject-btn", "data-action": "reject", "data-plan": plan.plan_id },
            "reject",
          ),
        );
      }
      section.appendChild(node);
    }
    return section;
  }

  private renderFeed(doc: Document): HTMLElement {
    const section = this.el(doc, "section", { id: "feed-box" });
    section.appendChild(this.el(doc, "h3", {}, "messages"));
    const list = this.el(doc, "ol", { id: "feed" });
    for (const entry of this.state.feed) {
      const summary = this.describeEntry(entry as unknown as Record<string, unknown>);
      const item = this.el(
        doc,
        "li",
        { "data-index": String(entry.index), "data-kind": entry.kind },
        `[${entry.time.toFixed(1)}] ${summary}`,
      );
      list.appendChild(item);
    }
    section.appendChild(list);
    return section;
  }

  private describeEntry(entry: Record<string, unknown>): string {
    switch (entry["kind"]) {
      case "FRAME":
        return `${entry["direction"]} ${entry["wire"]}`;
      case "C3":
        return `C3 ${entry["level"]}: ${entry["actor"]} for ${entry["beneficiary"]}`;
      case "DECISION": {
        const rest = Object.entries(entry)
          .filter(([k]) => !["kind", "index", "time", "name"].includes(k))
          .map(([k, v]) => `${k}=${v}`)
          .join(" ");
        return `decision ${entry["name"]} ${rest}`;
      }
      default:
        return `${entry["kind"]} ${entry["name"] ?? ""}`;
    }
  }

  private renderToasts(doc: Document): HTMLElement {
    const section = this.el(doc, "section", { id: "toasts" });
    for (const toast of this.state.toasts.slice(-3)) {
      section.appendChild(this.el(doc, "div", { class: "toast" }, toast));
    }
    return section;
  }
}
