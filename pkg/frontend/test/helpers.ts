import type { SocketLike } from "../src/gateway.js";
import type { SnapshotMessage } from "../src/types.js";

/** Scripted socket: records sends, lets tests push inbound messages. */
export class FakeSocket implements SocketLike {
  static instances: FakeSocket[] = [];
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;

  constructor(public url: string) {
    FakeSocket.instances.push(this);
  }

  open(): void {
    this.onopen?.();
  }

  push(message: unknown): void {
    this.onmessage?.({ data: JSON.stringify(message) });
  }

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  get sentJson(): Array<Record<string, unknown>> {
    return this.sent.map((s) => JSON.parse(s));
  }
}

export const fakeFactory = (url: string): SocketLike => new FakeSocket(url);

export function makeSnapshot(overrides: Partial<Record<string, unknown>> = {}): SnapshotMessage {
  const base = {
    type: "snapshot",
    arena: {
      width: 10,
      height: 8,
      locations: { layby: [5, 1], battery_depot: [2, 3] },
      obstacles: [],
    },
    world: {
      sim_time: 12.0,
      robots: {
        husky: {
          position: [1, 1],
          heading: 0,
          battery: 97,
          state: "Idle",
          mission: null,
          arm_angles: { right_shoulder: 0, left_shoulder: 0 },
          last_update: 11.5,
        },
        tello: {
          position: [1, 5],
          heading: 0,
          battery: 99,
          state: "Idle",
          mission: null,
          arm_angles: {},
          last_update: 11.8,
        },
      },
      assets: {
        metal_sheet: { kind: "plate", position: [8, 2], last_scan_severity: null, scanned_by: null },
      },
      items: {
        battery_box: { kind: "battery", position: [2, 3], carried_by: null },
      },
      log_length: 4,
      faults: 0,
    },
    sessions: { husky: "Connected", tello: "Connected" },
    pending_missions: {},
    plans: [],
    interactive: true,
    platforms: {
      husky: {
        display_name: "Husky",
        presets: { B: "scan_metal_sheet" },
        capabilities: ["GroundTraverse"],
        home: [1, 1],
        arm_joints: { right_shoulder: [0, 180], left_shoulder: [0, 180] },
      },
      tello: {
        display_name: "Tello",
        presets: { A: "inspect_blade_at_height" },
        capabilities: ["Fly"],
        home: [1, 5],
        arm_joints: {},
      },
    },
    mission_phases: [
      { name: "inspect_at_height", triggers: { tello: "A" } },
      { name: "sheet_scan", triggers: { husky: "B" } },
    ],
  } as unknown as SnapshotMessage;
  return { ...base, ...(overrides as object) } as SnapshotMessage;
}

export function makePlan(planId = "plan-1") {
  return {
    plan_id: planId,
    rule: "battery_fault_recovery",
    platform: "husky",
    code: "BATF",
    degraded: false,
    deadline: 17.0,
    approval: "Pending",
    tasks: [
      { verb: "Divert", assignee: "husky", params: { to: "5,1" }, status: "Pending" },
      { verb: "Scout", assignee: "tello", params: { target: "5,1" }, status: "Pending" },
    ],
  };
}

export async function waitFor(
  predicate: () => boolean,
  timeoutMs = 30_000,
  what = "condition",
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}`);
}
