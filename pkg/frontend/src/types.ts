/** Gateway wire types (JSON over WebSocket, field names fixed server-side). */

export interface RobotView {
  position: [number, number];
  heading: number;
  battery: number;
  state: string;
  mission: string | null;
  arm_angles: Record<string, number>;
  last_update: number;
}

export interface AssetView {
  kind: string;
  position: [number, number];
  last_scan_severity: number | null;
  scanned_by: string | null;
}

export interface ItemView {
  kind: string;
  position: [number, number] | null;
  carried_by: string | null;
}

export interface WorldView {
  sim_time: number;
  robots: Record<string, RobotView>;
  assets: Record<string, AssetView>;
  items: Record<string, ItemView>;
  log_length: number;
  faults: number;
}

export interface PlatformInfo {
  display_name: string;
  presets: Record<string, string>;
  capabilities: string[];
  home: [number, number];
  arm_joints: Record<string, [number, number]>;
}

export interface PlanTask {
  verb: string;
  assignee: string | null;
  params: Record<string, string>;
  status: string;
}

export interface PlanView {
  plan_id: string;
  rule: string;
  platform: string;
  code: string;
  degraded: boolean;
  deadline: number | null;
  approval: string;
  tasks: PlanTask[];
}

export interface MissionPhase {
  name: string;
  triggers: Record<string, string>;
}

export interface SnapshotMessage {
  type: "snapshot";
  world: WorldView;
  sessions: Record<string, string>;
  pending_missions: Record<string, string>;
  plans: PlanView[];
  interactive: boolean;
  platforms: Record<string, PlatformInfo>;
  mission_phases: MissionPhase[];
}

export interface LogEntry {
  index: number;
  kind: string;
  time: number;
  [key: string]: unknown;
}

export interface LogMessage {
  type: "log";
  entry: LogEntry;
}

export interface DecisionRequestMessage {
  type: "decision_request";
  plan: PlanView;
}

export interface NackMessage {
  type: "nack";
  request?: string;
  reason: string;
}

export type GatewayMessage =
  | SnapshotMessage
  | LogMessage
  | DecisionRequestMessage
  | NackMessage;

export type OutboundMessage =
  | { type: "trigger"; platform: string; char: string }
  | { type: "command"; platform: string; verb: string; args: string[] }
  | { type: "approve"; plan_id: string }
  | { type: "reject"; plan_id: string };
