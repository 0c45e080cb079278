/**
 * End to end against a freshly spawned server: a scripted pointer sweep
 * over the head zone must come back as a head-part gesture event plus a
 * dispatched action, fast enough for live use.
 */
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, ChildProcess } from "node:child_process";
import { createInterface } from "node:readline";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { PipelineClient } from "../src/client.js";
import { crc32, decodeFrame, encodeFrame } from "../src/codec.js";
import {
  disassembleCanvas,
  geometryChecksum,
  PaintSurface,
  Zone,
  zonesFromParts,
} from "../src/geometry.js";
import {
  ActionMessage,
  GestureMessage,
  StateMessage,
  TaxonomyMessage,
} from "../src/protocol.js";
import { tcpTransport } from "./tcp-transport.js";

const root = join(dirname(fileURLToPath(import.meta.url)), "..", "..");
const cache = join(root, "frontend", ".cache");

let server: ChildProcess;
let port = 0;

beforeAll(async () => {
  server = spawn(
    "python3",
    [
      "-u", "-m", "dogtouch.cli", "serve",
      "--bind", "127.0.0.1", "--port", "0",
      "--classifier", join(cache, "demo-classifier.dtck"),
      "--translator", join(cache, "demo-translator.dtck"),
    ],
    { cwd: root, stdio: ["ignore", "pipe", "inherit"] },
  );
  port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 60_000);
    createInterface({ input: server.stdout! }).on("line", (line) => {
      const m = line.match(/serving on [\d.]+:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
});

afterAll(() => {
  server?.kill("SIGINT");
});

interface Collected {
  taxonomy?: TaxonomyMessage;
  gestures: GestureMessage[];
  actions: ActionMessage[];
  states: StateMessage[];
}

function connect(): Promise<{ client: PipelineClient; got: Collected }> {
  return new Promise((resolve, reject) => {
    const got: Collected = { gestures: [], actions: [], states: [] };
    const client = new PipelineClient({
      taxonomy: (m) => {
        got.taxonomy = m;
        resolve({ client, got });
      },
      gesture: (m) => got.gestures.push(m),
      action: (m) => got.actions.push(m),
      state: (m) => got.states.push(m),
      error: (m) => reject(new Error(`server error: ${JSON.stringify(m)}`)),
    });
    const transport = tcpTransport("127.0.0.1", port, () => client.handshake());
    client.attach(transport);
    setTimeout(() => reject(new Error("no taxonomy greeting")), 10_000);
  });
}

function waitFor(predicate: () => boolean, ms: number): Promise<number> {
  const started = performance.now();
  return new Promise((resolve, reject) => {
    const poll = () => {
      if (predicate()) return resolve(performance.now() - started);
      if (performance.now() - started > ms) return reject(new Error("timed out"));
      setTimeout(poll, 5);
    };
    poll();
  });
}

describe("closed loop against the demo server", () => {
  it("head sweep becomes a head gesture event and a dispatched action", async () => {
    const { client, got } = await connect();
    expect(got.taxonomy).toBeDefined();
    expect(geometryChecksum(got.taxonomy!.parts, crc32)).toBe(got.taxonomy!.geometry_checksum);

    const zones: Zone[] = zonesFromParts(got.taxonomy!.parts);
    const head = zones.find((z) => z.name === "head")!;
    const surface = new PaintSurface(zones);

    // scripted pointer trace: sweep across the head zone over 14 ticks
    let tick = 0;
    const emitted: Uint8Array[][] = [];
    const sendTick = () => {
      const canvas = surface.snapshot();
      const frames = disassembleCanvas(canvas, tick);
      emitted.push(frames.map((f) => encodeFrame(f)));
      client.sendFrames(frames);
      tick += 1;
    };
    for (let i = 0; i < 14; i++) {
      const row = head.row + head.height / 2;
      const col = head.col + 1 + (i / 13) * (head.width - 3);
      surface.stamp(row, col, 2.5, 150);
      sendTick();
    }
    for (let i = 0; i < 10; i++) sendTick(); // release: decay, then silence
    const sentAt = performance.now();

    const waited = await waitFor(
      () => got.gestures.some((g) => g.part === "head") && got.actions.length > 0,
      5_000,
    );
    const latency = performance.now() - sentAt;
    expect(latency).toBeLessThan(500);
    expect(waited).toBeLessThan(5_000);

    const gesture = got.gestures.find((g) => g.part === "head")!;
    expect(gesture.class_id).toBeGreaterThanOrEqual(0);
    expect(gesture.confidence).toBeGreaterThan(0);
    const action = got.actions[0];
    expect(action.trigger).toBe(gesture.token);
    expect(action.duration_ticks).toBeGreaterThanOrEqual(1);

    // every frame this client emitted is bit-valid under the codec
    for (const frames of emitted) {
      for (const bytes of frames) {
        const decoded = decodeFrame(bytes);
        expect(encodeFrame(decoded)).toEqual(bytes);
      }
    }
    client.close();
  });

  it("state broadcasts arrive within two ticks of a full octet", async () => {
    const { client, got } = await connect();
    const zones = zonesFromParts(got.taxonomy!.parts);
    const surface = new PaintSurface(zones);
    client.sendFrames(disassembleCanvas(surface.snapshot(), 0));
    await waitFor(() => got.states.length > 0, 2_000);
    expect(got.states[0].posture).toBeDefined();
    client.close();
  });
});
