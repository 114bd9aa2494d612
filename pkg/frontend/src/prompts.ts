/**
 * Prompt shapes mirroring the service's JSON contract.
 */

export interface PromptPoint {
  x: number;
  y: number;
  /** 1 = foreground, 0 = background */
  label: 0 | 1;
}

export interface PromptBox {
  x_lt: number;
  y_lt: number;
  x_rb: number;
  y_rb: number;
}

export interface PromptSet {
  points?: PromptPoint[];
  box?: PromptBox | null;
  contour?: [number, number][] | null;
}

export const MAX_CONTOUR_VERTICES = 256;

/**
 * Thin a freehand contour down to the wire budget, keeping vertex order.
 * Evenly strided so the polygon's overall shape survives; the first vertex
 * is always kept, and short contours pass through untouched.
 */
export function resampleContour(
  vertices: [number, number][],
  budget: number = MAX_CONTOUR_VERTICES,
): [number, number][] {
  if (vertices.length <= budget) return vertices.slice();
  const out: [number, number][] = [];
  const step = vertices.length / budget;
  for (let i = 0; i < budget; i++) {
    out.push(vertices[Math.floor(i * step)]);
  }
  return out;
}

/** Serialize for the propose-mask endpoint. */
export function promptsToJson(prompts: PromptSet): Record<string, unknown> {
  const body: Record<string, unknown> = {
    points: (prompts.points ?? []).map((p) => ({ x: p.x, y: p.y, label: p.label })),
    box: prompts.box ?? null,
  };
  if (prompts.contour && prompts.contour.length > 0) {
    body.contour = resampleContour(prompts.contour).map(([x, y]) => [x, y]);
  }
  return body;
}
