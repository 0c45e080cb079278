/**
 * Browser entry point: paint pressure on the dog's sensor map, watch
 * the recognized gesture / predicted action / dog state flow back.
 */

import { crc32 } from "./codec.js";
import { PipelineClient, webSocketTransport } from "./client.js";
import {
  CANVAS_COLS,
  CANVAS_ROWS,
  disassembleCanvas,
  geometryChecksum,
  PaintSurface,
  Zone,
  zonesFromParts,
} from "./geometry.js";
import { FeedbackPanel, PanelState } from "./panel.js";

const SCALE = 7; // display pixels per sensor pixel
const TICK_MS = 100; // 10 Hz

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  private canvas = el<HTMLCanvasElement>("pad");
  private ctx = this.canvas.getContext("2d")!;
  private zones: Zone[] = [];
  private surface = new PaintSurface([]);
  private heat: Uint8Array = new Uint8Array(CANVAS_ROWS * CANVAS_COLS);
  private pointerDown = false;
  private pointer: { row: number; col: number } | null = null;
  private tick = 0;
  private panel: FeedbackPanel;
  private client: PipelineClient;

  constructor() {
    this.canvas.width = CANVAS_COLS * SCALE;
    this.canvas.height = CANVAS_ROWS * SCALE;
    this.panel = new FeedbackPanel((s) => this.renderPanel(s));
    this.client = new PipelineClient({
      taxonomy: (msg) => {
        this.zones = zonesFromParts(msg.parts);
        this.surface.setZones(this.zones);
        const local = geometryChecksum(msg.parts, crc32);
        if (local !== msg.geometry_checksum) {
          console.error("zone geometry checksum mismatch", local, msg.geometry_checksum);
        }
        this.panel.setConnected(true);
      },
      gesture: (m) => this.panel.onGesture(m),
      action: (m) => this.panel.onAction(m),
      rejection: (m) => this.panel.onRejection(m),
      state: (m) => this.panel.onState(m),
      error: (m) => console.warn("server error", m),
      disconnected: () => {
        this.panel.setConnected(false);
        setTimeout(() => this.connect(), 1000);
      },
    });
    this.bindPointer();
    this.bindSliders();
    this.connect();
    setInterval(() => this.onTick(), TICK_MS);
    requestAnimationFrame(() => this.draw());
  }

  private connect() {
    const proto = location.protocol === "https:" ? "wss" : "ws";
    const transport = webSocketTransport(`${proto}://${location.host}/ws`, () =>
      this.client.handshake(),
    );
    this.client.attach(transport);
  }

  private bindPointer() {
    const toCell = (ev: PointerEvent) => {
      const rect = this.canvas.getBoundingClientRect();
      return {
        row: ((ev.clientY - rect.top) / rect.height) * CANVAS_ROWS,
        col: ((ev.clientX - rect.left) / rect.width) * CANVAS_COLS,
      };
    };
    this.canvas.addEventListener("pointerdown", (ev) => {
      this.pointerDown = true;
      this.pointer = toCell(ev);
      this.canvas.setPointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      this.pointer = toCell(ev);
    });
    const up = () => {
      this.pointerDown = false;
    };
    this.canvas.addEventListener("pointerup", up);
    this.canvas.addEventListener("pointercancel", up);
  }

  private brushRadius = 2.5;
  private brushPressure = 140;

  private bindSliders() {
    const radius = el<HTMLInputElement>("brush-radius");
    const pressure = el<HTMLInputElement>("brush-pressure");
    radius.addEventListener("input", () => (this.brushRadius = Number(radius.value)));
    pressure.addEventListener("input", () => (this.brushPressure = Number(pressure.value)));
  }

  private onTick() {
    if (this.pointerDown && this.pointer) {
      this.surface.stamp(this.pointer.row, this.pointer.col, this.brushRadius, this.brushPressure);
    }
    this.heat = this.surface.snapshot();
    // silence ticks still send all-zero frames: the server sees the
    // same 10 Hz cadence the hardware bus would deliver
    this.client.sendFrames(disassembleCanvas(this.heat, this.tick));
    this.tick += 1;
  }

  private draw() {
    const ctx = this.ctx;
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    for (const z of this.zones) {
      ctx.fillStyle = "rgba(240, 200, 60, 0.12)";
      ctx.fillRect(z.col * SCALE, z.row * SCALE, z.width * SCALE, z.height * SCALE);
      ctx.strokeStyle = "rgba(240, 200, 60, 0.5)";
      ctx.strokeRect(z.col * SCALE + 0.5, z.row * SCALE + 0.5, z.width * SCALE - 1, z.height * SCALE - 1);
      ctx.fillStyle = "rgba(240, 200, 60, 0.8)";
      ctx.font = "11px system-ui";
      ctx.fillText(z.name, z.col * SCALE + 4, z.row * SCALE + 13);
    }
    // heat overlay: exactly the canvas the classifier sees
    for (let r = 0; r < CANVAS_ROWS; r++) {
      for (let c = 0; c < CANVAS_COLS; c++) {
        const v = this.heat[r * CANVAS_COLS + c];
        if (v === 0) continue;
        ctx.fillStyle = `rgba(255, ${Math.max(40, 255 - v)}, 40, ${Math.min(1, v / 160)})`;
        ctx.fillRect(c * SCALE, r * SCALE, SCALE, SCALE);
      }
    }
    requestAnimationFrame(() => this.draw());
  }

  private renderPanel(s: PanelState) {
    el("conn").textContent = s.connected ? "connected" : "reconnecting...";
    el("conn").className = s.connected ? "ok" : "bad";
    el("gesture").textContent = s.gesture
      ? `${s.gesture.token} (${(s.gesture.confidence * 100).toFixed(1)}%)`
      : "-";
    el("action").textContent = s.action ? `${s.action.action}` : "-";
    const rej = el("rejection");
    if (s.rejection) {
      rej.textContent = `${s.rejection.action}: ${s.rejection.reason}`;
      rej.className = "badge bad";
    } else {
      rej.textContent = "";
      rej.className = "badge";
    }
    el("posture").textContent = s.currentAction
      ? `${s.posture} (doing ${s.currentAction})`
      : s.posture;
    el("history").textContent = s.history.join(" ") || "-";
  }
}

new App();
