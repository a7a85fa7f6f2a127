/**
 * Console state and its pure update logic.
 *
 * Everything rendered comes out of this store; gateway messages are the
 * only inputs. Feed entries are keyed by server log index so reconnects
 * can never duplicate or reorder what the operator already saw.
 */

import type {
  DecisionRequestMessage,
  GatewayMessage,
  LogEntry,
  NackMessage,
  PlanView,
  SnapshotMessage,
} from "./types.js";

export const FEED_LIMIT = 500;

export interface PendingDecision {
  plan: PlanView;
  receivedAt: number; // console wall clock ms, for the countdown
  resolved: boolean;
  resolution: string | null;
}

export interface ConsoleState {
  connected: boolean;
  snapshot: SnapshotMessage | null;
  /** newest first, unique by entry.index */
  feed: LogEntry[];
  seenIndices: Set<number>;
  pendingDecisions: Map<string, PendingDecision>;
  focusPlatform: string | null;
  /** per platform per joint: slider setpoints (the "desired"/solid pose) */
  desiredAngles: Map<string, Record<string, number>>;
  toasts: string[];
  lastNack: NackMessage | null;
}

export function initialState(): ConsoleState {
  return {
    connected: false,
    snapshot: null,
    feed: [],
    seenIndices: new Set(),
    pendingDecisions: new Map(),
    focusPlatform: null,
    desiredAngles: new Map(),
    toasts: [],
    lastNack: null,
  };
}

export function applyMessage(
  state: ConsoleState,
  message: GatewayMessage,
  nowMs: number,
): ConsoleState {
  switch (message.type) {
    case "snapshot":
      return applySnapshot(state, message);
    case "log":
      return applyLog(state, message.entry);
    case "decision_request":
      return applyDecisionRequest(state, message, nowMs);
    case "nack":
      return {
        ...state,
        lastNack: message,
        toasts: [...state.toasts, `rejected: ${message.reason}`],
      };
    default:
      return state;
  }
}

function applySnapshot(state: ConsoleState, snapshot: SnapshotMessage): ConsoleState {
  const pending = new Map(state.pendingDecisions);
  for (const plan of snapshot.plans) {
    const entry = pending.get(plan.plan_id);
    if (entry && plan.approval !== "Pending" && !entry.resolved) {
      pending.set(plan.plan_id, {
        ...entry,
        plan,
        resolved: true,
        resolution: plan.approval,
      });
    }
  }
  return { ...state, snapshot, pendingDecisions: pending };
}

function applyLog(state: ConsoleState, entry: LogEntry): ConsoleState {
  if (state.seenIndices.has(entry.index)) {
    return state; // reconnect replays or duplicates: drop silently
  }
  const seen = new Set(state.seenIndices);
  seen.add(entry.index);
  // newest (highest index) first; late deliveries slot into place
  const feed = [entry, ...state.feed];
  for (let i = 0; i + 1 < feed.length && feed[i].index < feed[i + 1].index; i++) {
    [feed[i], feed[i + 1]] = [feed[i + 1], feed[i]];
  }
  feed.length = Math.min(feed.length, FEED_LIMIT);

  // plan lifecycle entries resolve the matching decision card exactly once
  let pending = state.pendingDecisions;
  if (entry.kind === "DECISION") {
    const name = entry["name"] as string | undefined;
    const planId = entry["plan_id"] as string | undefined;
    if (planId && pending.has(planId)) {
      const card = pending.get(planId)!;
      if (!card.resolved) {
        if (name === "plan_approved" || name === "plan_rejected" || name === "approval_expired") {
          pending = new Map(pending);
          pending.set(planId, {
            ...card,
            resolved: true,
            resolution:
              name === "plan_approved"
                ? "approved"
                : name === "plan_rejected"
                  ? "rejected"
                  : "auto-approved",
          });
        }
      }
    }
  }
  return { ...state, feed, seenIndices: seen, pendingDecisions: pending };
}

function applyDecisionRequest(
  state: ConsoleState,
  message: DecisionRequestMessage,
  nowMs: number,
): ConsoleState {
  const pending = new Map(state.pendingDecisions);
  if (!pending.has(message.plan.plan_id)) {
    pending.set(message.plan.plan_id, {
      plan: message.plan,
      receivedAt: nowMs,
      resolved: false,
      resolution: null,
    });
  }
  return { ...state, pendingDecisions: pending };
}

/** Decision cards still awaiting a verdict (shown with a countdown). */
export function openDecisions(state: ConsoleState): PendingDecision[] {
  return [...state.pendingDecisions.values()].filter((d) => !d.resolved);
}

export function setDesired(
  state: ConsoleState,
  platform: string,
  joint: string,
  angle: number,
): ConsoleState {
  const desired = new Map(state.desiredAngles);
  desired.set(platform, { ...(desired.get(platform) ?? {}), [joint]: angle });
  return { ...state, desiredAngles: desired };
}

/** Desired defaults to the reported ghost until a slider moves. */
export function desiredFor(
  state: ConsoleState,
  platform: string,
): Record<string, number> {
  const reported = state.snapshot?.world.robots[platform]?.arm_angles ?? {};
  return { ...reported, ...(state.desiredAngles.get(platform) ?? {}) };
}

export function platformBusy(state: ConsoleState, platform: string): boolean {
  if (!state.snapshot) return true;
  if (platform in state.snapshot.pending_missions) return true;
  const robot = state.snapshot.world.robots[platform];
  return robot ? robot.state !== "Idle" : true;
}

export function platformFaulted(state: ConsoleState, platform: string): boolean {
  const robot = state.snapshot?.world.robots[platform];
  return robot?.state === "Faulted" || robot?.state === "SafetyStopped";
}

export function sessionStale(state: ConsoleState, platform: string): boolean {
  return (state.snapshot?.sessions[platform] ?? "Disconnected") !== "Connected";
}
