/** Paints a ViewModel onto a 2D canvas: plan view, forward is up. */

import type { ViewModel } from "./view.js";

const VIEW = { xMin: -10, xMax: 45, yMin: -14, yMax: 14 };

export function paint(ctx: CanvasRenderingContext2D, vm: ViewModel): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = vm.stale ? "#f3ede3" : "#fafafa";
  ctx.fillRect(0, 0, width, height);

  const sx = height / (VIEW.xMax - VIEW.xMin);
  const sy = width / (VIEW.yMax - VIEW.yMin);
  const s = Math.min(sx, sy);
  const toPx = (x: number, y: number): [number, number] => [
    width / 2 - y * s,
    height - (x - VIEW.xMin) * s,
  ];

  for (const shape of vm.shapes) {
    if (shape.points.length < 2) continue;
    ctx.beginPath();
    ctx.setLineDash(shape.dashed ? [6, 4] : []);
    const [mx, my] = toPx(shape.points[0]![0], shape.points[0]![1]);
    ctx.moveTo(mx, my);
    for (const [x, y] of shape.points.slice(1)) {
      const [px, py] = toPx(x, y);
      ctx.lineTo(px, py);
    }
    ctx.closePath();
    if (shape.fill) {
      ctx.fillStyle = shape.fill;
      ctx.fill();
    }
    ctx.strokeStyle = shape.stroke;
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
  ctx.setLineDash([]);

  // anomaly score sparkline along the bottom edge
  const scores = vm.sparkline.filter((p) => p.score !== null);
  if (scores.length > 1) {
    const maxScore = Math.max(...scores.map((p) => p.score as number), 1e-9);
    ctx.beginPath();
    ctx.strokeStyle = "#b05ad1";
    scores.forEach((p, i) => {
      const px = 10 + (i / (scores.length - 1)) * (width / 3);
      const py = height - 10 - ((p.score as number) / maxScore) * 40;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }

  if (vm.stale) {
    ctx.fillStyle = "#a33";
    ctx.font = "bold 14px sans-serif";
    ctx.fillText("STALE — no telemetry for > 1 s", 10, 20);
  }
}
