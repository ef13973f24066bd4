/**
 * Thin three.js wiring around EditorSession: wireframe mesh, draggable
 * handle gizmos, error banner, reset and export buttons.
 *
 * All deformation math happens on the server; this file only mirrors
 * session state into the scene graph.
 */

import * as THREE from "three";

import { EditorSession, ServiceUnreachableError, View } from "./session";

const GIZMO_RADIUS = 0.04;

export async function startViewer(container: HTMLElement, serviceUrl: string): Promise<void> {
  const banner = document.createElement("div");
  banner.className = "banner";
  banner.style.display = "none";
  container.appendChild(banner);

  let session: EditorSession;
  try {
    session = await EditorSession.connect(serviceUrl, fetch.bind(globalThis));
  } catch (err) {
    if (err instanceof ServiceUnreachableError) {
      banner.textContent = err.message;
      banner.style.display = "block";
      return;
    }
    throw err;
  }

  const renderer = new THREE.WebGLRenderer({ antialias: true });
  renderer.setSize(container.clientWidth, container.clientHeight);
  container.appendChild(renderer.domElement);

  const scene = new THREE.Scene();
  const camera = new THREE.OrthographicCamera(-2, 2, 2, -2, 0.01, 100);
  camera.position.set(0, 0, 5);

  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute(
    "position",
    new THREE.Float32BufferAttribute(session.vertices.flat(), 3),
  );
  geometry.setIndex(session.mesh.faces.flat());
  const wire = new THREE.LineSegments(
    new THREE.WireframeGeometry(geometry),
    new THREE.LineBasicMaterial({ color: 0x88ccff }),
  );
  scene.add(wire);

  const gizmos: THREE.Mesh[] = session.handlePositions().map((p) => {
    const gizmo = new THREE.Mesh(
      new THREE.SphereGeometry(GIZMO_RADIUS),
      new THREE.MeshBasicMaterial({ color: 0xffaa00 }),
    );
    gizmo.position.set(p[0], p[1], p[2]);
    scene.add(gizmo);
    return gizmo;
  });

  const sync = () => {
    geometry.setAttribute(
      "position",
      new THREE.Float32BufferAttribute(session.vertices.flat(), 3),
    );
    wire.geometry.dispose();
    wire.geometry = new THREE.WireframeGeometry(geometry);
    session.handlePositions().forEach((p, k) => gizmos[k].position.set(p[0], p[1], p[2]));
    banner.textContent = session.banner ?? "";
    banner.style.display = session.banner ? "block" : "none";
    renderer.render(scene, camera);
  };

  const currentView = (): View => {
    const right = new THREE.Vector3();
    const up = new THREE.Vector3();
    const forward = new THREE.Vector3();
    camera.matrixWorld.extractBasis(right, up, forward);
    const pixelsPerUnit = container.clientWidth / (camera.right - camera.left);
    return {
      right: right.toArray() as View["right"],
      up: up.toArray() as View["up"],
      scale: pixelsPerUnit,
    };
  };

  const raycaster = new THREE.Raycaster();
  let dragging = -1;
  let last: { x: number; y: number } | null = null;

  renderer.domElement.addEventListener("pointerdown", (ev) => {
    const ndc = new THREE.Vector2(
      (ev.offsetX / container.clientWidth) * 2 - 1,
      -(ev.offsetY / container.clientHeight) * 2 + 1,
    );
    raycaster.setFromCamera(ndc, camera);
    const hit = raycaster.intersectObjects(gizmos)[0];
    dragging = hit ? gizmos.indexOf(hit.object as THREE.Mesh) : -1;
    last = { x: ev.offsetX, y: ev.offsetY };
  });
  renderer.domElement.addEventListener("pointermove", (ev) => {
    if (dragging < 0 || !last) return;
    session.dragHandle(dragging, { dx: ev.offsetX - last.x, dy: ev.offsetY - last.y }, currentView());
    last = { x: ev.offsetX, y: ev.offsetY };
    void session.whenQuiescent().then(sync);
    sync();
  });
  renderer.domElement.addEventListener("pointerup", () => {
    dragging = -1;
    last = null;
  });

  const resetButton = document.createElement("button");
  resetButton.textContent = "Reset";
  resetButton.addEventListener("click", () => {
    session.reset();
    void session.whenQuiescent().then(sync);
  });
  container.appendChild(resetButton);

  const exportButton = document.createElement("button");
  exportButton.textContent = "Export offsets";
  exportButton.addEventListener("click", () => {
    const blob = new Blob([JSON.stringify(session.exportOffsets())], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "offsets.json";
    link.click();
    URL.revokeObjectURL(link.href);
  });
  container.appendChild(exportButton);

  sync();
}
