/**
 * Editor session state for the handle-based deformation service.
 *
 * The session owns the handle offsets and talks to the backend over HTTP;
 * it never computes deformed vertices itself. Every rendered shape is the
 * `vertices` array of the most recent successful POST /deform response.
 */

export type Vec3 = [number, number, number];

export interface View {
  /** world direction of the screen x axis */
  right: Vec3;
  /** world direction of the screen y axis (screen y grows downward) */
  up: Vec3;
  /** pixels per world unit */
  scale: number;
}

export interface ScreenDelta {
  dx: number;
  dy: number;
}

export interface MeshData {
  vertices: number[][];
  faces: number[][];
}

export interface HandleData {
  k: number;
  seeds: number[];
  template_positions: number[][];
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ServiceUnreachableError extends Error {}

/** Screen-space drag unprojected into the current view plane. */
export function worldOffsetFromScreenDelta(delta: ScreenDelta, view: View): Vec3 {
  const sx = delta.dx / view.scale;
  const sy = -delta.dy / view.scale;
  return [
    sx * view.right[0] + sy * view.up[0],
    sx * view.right[1] + sy * view.up[1],
    sx * view.right[2] + sy * view.up[2],
  ];
}

export class EditorSession {
  readonly baseUrl: string;
  readonly mesh: MeshData;
  readonly handles: HandleData;

  /** per-handle world-space offsets; the editor's only mutable model state */
  offsets: number[][];
  /** last rendered vertices; always a verbatim server response */
  vertices: number[][];
  /** user-facing error banner text, or null when healthy */
  banner: string | null = null;
  /** offsets of every request actually sent, for coalescing assertions */
  readonly requestLog: number[][][] = [];

  private readonly fetchImpl: FetchLike;
  private pending = false;
  private queued: number[][] | null = null;
  private quiescentWaiters: Array<() => void> = [];

  private constructor(baseUrl: string, fetchImpl: FetchLike, mesh: MeshData, handles: HandleData) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
    this.mesh = mesh;
    this.handles = handles;
    this.offsets = zeros(handles.k);
    this.vertices = mesh.vertices.map((v) => v.slice());
  }

  static async connect(baseUrl: string, fetchImpl: FetchLike): Promise<EditorSession> {
    let mesh: MeshData;
    let handles: HandleData;
    try {
      const meshResp = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/mesh`);
      const handlesResp = await fetchImpl(`${baseUrl.replace(/\/$/, "")}/handles`);
      if (!meshResp.ok || !handlesResp.ok) {
        throw new Error(`service responded ${meshResp.status}/${handlesResp.status}`);
      }
      mesh = (await meshResp.json()) as MeshData;
      handles = (await handlesResp.json()) as HandleData;
    } catch (err) {
      throw new ServiceUnreachableError(`cannot reach deformation service at ${baseUrl}: ${err}`);
    }
    return new EditorSession(baseUrl, fetchImpl, mesh, handles);
  }

  /** current world positions of the handle gizmos */
  handlePositions(): number[][] {
    return this.handles.template_positions.map((p, k) => [
      p[0] + this.offsets[k][0],
      p[1] + this.offsets[k][1],
      p[2] + this.offsets[k][2],
    ]);
  }

  dragHandle(index: number, delta: ScreenDelta, view: View): void {
    if (index < 0 || index >= this.handles.k) {
      throw new RangeError(`handle index ${index} out of range`);
    }
    const w = worldOffsetFromScreenDelta(delta, view);
    this.offsets[index] = [
      this.offsets[index][0] + w[0],
      this.offsets[index][1] + w[1],
      this.offsets[index][2] + w[2],
    ];
    this.requestDeform();
  }

  reset(): void {
    this.offsets = zeros(this.handles.k);
    this.requestDeform();
  }

  exportOffsets(): { offsets: number[][] } {
    return { offsets: this.offsets.map((o) => o.slice()) };
  }

  /** resolves once no deform request is pending or queued */
  whenQuiescent(): Promise<void> {
    if (!this.pending && this.queued === null) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.quiescentWaiters.push(resolve));
  }

  /**
   * Latest-wins coalescing: at most one request in flight; while one is
   * pending, newer offsets overwrite the single queued snapshot.
   */
  private requestDeform(): void {
    const snapshot = this.offsets.map((o) => o.slice());
    if (this.pending) {
      this.queued = snapshot;
      return;
    }
    void this.send(snapshot);
  }

  private async send(offsets: number[][]): Promise<void> {
    this.pending = true;
    this.requestLog.push(offsets);
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/deform`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ offsets }),
      });
      if (!resp.ok) {
        const body = (await resp.json()) as { error?: string };
        this.banner = `deform failed (${resp.status}): ${body.error ?? "unknown error"}`;
      } else {
        this.vertices = ((await resp.json()) as { vertices: number[][] }).vertices;
        this.banner = null;
      }
    } catch (err) {
      // offsets are retained; the next successful request re-syncs the mesh
      this.banner = `network failure: ${err}`;
    } finally {
      this.pending = false;
      if (this.queued !== null) {
        const next = this.queued;
        this.queued = null;
        void this.send(next);
      } else {
        const waiters = this.quiescentWaiters;
        this.quiescentWaiters = [];
        waiters.forEach((resolve) => resolve());
      }
    }
  }
}

function zeros(k: number): number[][] {
  return Array.from({ length: k }, () => [0, 0, 0]);
}
