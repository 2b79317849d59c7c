import { ApiError, Client } from "./api";
import { canvasToImage, fitTransform, imageToCanvas, markerRadiusCanvasPx, Viewport } from "./geometry";
import { compositeOverlay, Rgba } from "./overlay";
import { SessionController } from "./state";
import type { Polarity } from "./types";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const toastBox = $<HTMLDivElement>("toasts");
const dscBadge = $<HTMLSpanElement>("dsc");
const sizeBadge = $<HTMLSpanElement>("applied-size");
const revBadge = $<HTMLSpanElement>("revision");
const statusBadge = $<HTMLSpanElement>("status");

const api = new Client("");
const controller = new SessionController(api);

let imagePixels: Rgba | null = null; // uploaded slice at native size
let maskBytes: Uint8Array | null = null; // one byte per pixel
let decodedMaskB64: string | null = null;

function toast(text: string) {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = text;
  toastBox.appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

function viewport(): Viewport {
  return {
    canvasWidth: canvas.width,
    canvasHeight: canvas.height,
    imageWidth: controller.view.width || (imagePixels?.width ?? 1),
    imageHeight: controller.view.height || (imagePixels?.height ?? 1),
  };
}

async function blobToRgba(blob: Blob): Promise<Rgba> {
  const bmp = await createImageBitmap(blob);
  const off = document.createElement("canvas");
  off.width = bmp.width;
  off.height = bmp.height;
  const octx = off.getContext("2d")!;
  octx.drawImage(bmp, 0, 0);
  const data = octx.getImageData(0, 0, bmp.width, bmp.height);
  return { data: data.data, width: bmp.width, height: bmp.height };
}

function b64ToBlob(b64: string): Blob {
  const bin = atob(b64);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  return new Blob([bytes], { type: "image/png" });
}

async function decodeMask(b64: string): Promise<Uint8Array> {
  const rgba = await blobToRgba(b64ToBlob(b64));
  const out = new Uint8Array(rgba.width * rgba.height);
  for (let i = 0; i < out.length; i++) out[i] = rgba.data[i * 4];
  return out;
}

function draw() {
  const s = controller.view;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!imagePixels) return;

  let base = imagePixels;
  if (maskBytes) {
    try {
      base = compositeOverlay(imagePixels, maskBytes, s.opacity);
    } catch (err) {
      toast(describe(err));
    }
  }
  const off = document.createElement("canvas");
  off.width = base.width;
  off.height = base.height;
  const pixels = new Uint8ClampedArray(base.data);
  off.getContext("2d")!.putImageData(new ImageData(pixels, base.width, base.height), 0, 0);

  const v = viewport();
  const t = fitTransform(v);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, t.offsetX, t.offsetY, base.width * t.scale, base.height * t.scale);

  for (const m of s.markers) {
    const { x, y } = imageToCanvas(m.row, m.col, v);
    const r = Math.max(markerRadiusCanvasPx(m.size_px, v), 2);
    ctx.beginPath();
    ctx.arc(x, y, r, 0, Math.PI * 2);
    ctx.strokeStyle = m.polarity === "foreground" ? "#2ecc40" : "#ff4136";
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  revBadge.textContent = s.revision >= 0 ? `rev ${s.revision}` : "";
  sizeBadge.textContent = s.appliedClickSize !== null ? `click size ${s.appliedClickSize}px` : "";
  dscBadge.textContent = s.dsc !== null ? `DSC ${s.dsc.toFixed(2)}` : "";
  statusBadge.textContent = s.pending ? "working..." : "";
}

controller.subscribe(() => {
  const s = controller.view;
  if (s.maskB64 && s.maskB64 !== decodedMaskB64) {
    const b64 = s.maskB64;
    decodeMask(b64).then((bytes) => {
      if (controller.view.maskB64 === b64) {
        maskBytes = bytes;
        decodedMaskB64 = b64;
        draw();
      }
    });
  }
  draw();
});

async function startSession() {
  const imageFile = $<HTMLInputElement>("image-file").files?.[0];
  if (!imageFile) {
    toast("choose an image first");
    return;
  }
  const gtFile = $<HTMLInputElement>("gt-file").files?.[0];
  const checkpoint = $<HTMLSelectElement>("checkpoint").value || undefined;
  const mode = $<HTMLSelectElement>("size-mode").value;
  const policy =
    mode === "dynamic"
      ? { mode: "dynamic", alpha: Number($<HTMLSelectElement>("alpha").value) }
      : { mode: "fixed", fixed_size_px: Number($<HTMLInputElement>("fixed-size").value) };
  try {
    imagePixels = await blobToRgba(imageFile);
    maskBytes = null;
    decodedMaskB64 = null;
    await controller.open(imageFile, { gt: gtFile, policy, checkpoint });
  } catch (err) {
    toast(describe(err));
  }
}

async function onCanvasClick(ev: MouseEvent, polarity: Polarity) {
  const rect = canvas.getBoundingClientRect();
  const px = canvasToImage(ev.clientX - rect.left, ev.clientY - rect.top, viewport());
  if (!px) return; // outside the image: ignored client-side
  const outcome = await controller
    .click(px.row, px.col, polarity)
    .catch((err) => {
      toast(describe(err));
      return { accepted: false as const };
    });
  if (!outcome.accepted && "reason" in outcome && outcome.reason === "pending") {
    toast("previous click still processing");
  }
}

async function loadCheckpoints() {
  try {
    const list = await api.listCheckpoints();
    const select = $<HTMLSelectElement>("checkpoint");
    for (const ck of list) {
      const opt = document.createElement("option");
      opt.value = ck.id;
      opt.textContent = ck.id;
      select.appendChild(opt);
    }
  } catch (err) {
    toast(`no checkpoints: ${describe(err)}`);
  }
}

canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
canvas.addEventListener("mousedown", (ev) => {
  if (ev.button === 0) void onCanvasClick(ev, "foreground");
  else if (ev.button === 2) void onCanvasClick(ev, "background");
});
$<HTMLButtonElement>("start").addEventListener("click", () => void startSession());
$<HTMLButtonElement>("undo").addEventListener("click", async () => {
  const outcome = await controller.undo().catch((err) => {
    toast(describe(err));
    return { accepted: false as const };
  });
  if (!outcome.accepted && "reason" in outcome && outcome.reason === "pending") {
    toast("previous request still processing");
  }
});
$<HTMLInputElement>("opacity").addEventListener("input", (ev) => {
  controller.setOpacity(Number((ev.target as HTMLInputElement).value) / 100);
});
$<HTMLSelectElement>("size-mode").addEventListener("change", (ev) => {
  const dynamic = (ev.target as HTMLSelectElement).value === "dynamic";
  $<HTMLSelectElement>("alpha").disabled = !dynamic;
  $<HTMLInputElement>("fixed-size").disabled = dynamic;
});

void loadCheckpoints();
draw();
