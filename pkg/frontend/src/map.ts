import type { BoundaryCollection, Candidate } from './types.js';

/** Equirectangular projection into an SVG viewBox. */
function project(lon: number, lat: number, width: number, height: number): [number, number] {
  const x = ((lon + 180) / 360) * width;
  const y = ((90 - lat) / 180) * height;
  return [x, y];
}

function ringPath(ring: number[][], width: number, height: number): string {
  const parts: string[] = [];
  ring.forEach(([lon, lat], i) => {
    const [x, y] = project(lon, lat, width, height);
    parts.push(`${i === 0 ? 'M' : 'L'}${x.toFixed(1)},${y.toFixed(1)}`);
  });
  parts.push('Z');
  return parts.join('');
}

export function featurePath(
  geometry: BoundaryCollection['features'][number]['geometry'],
  width: number,
  height: number,
): string {
  const polys =
    geometry.type === 'Polygon' ? [geometry.coordinates] : geometry.coordinates;
  return polys
    .map((poly) => poly.map((ring) => ringPath(ring, width, height)).join(''))
    .join('');
}

/** Opacity class per candidate rank; highest-scoring countries darkest.
 * Uses only server-provided ordering, no client-side re-scoring. */
export function highlightClasses(candidates: Candidate[]): Map<string, string> {
  const out = new Map<string, string>();
  candidates.forEach((c, rank) => {
    const bucket = rank === 0 ? 'map-top' : rank < 5 ? 'map-strong' : 'map-weak';
    out.set(c.country, c.intersection ? `${bucket} map-intersection` : bucket);
  });
  return out;
}

export function renderMap(
  svg: SVGSVGElement,
  boundaries: BoundaryCollection,
  candidates: Candidate[],
): void {
  const width = 720;
  const height = 360;
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  const classes = highlightClasses(candidates);
  svg.replaceChildren();
  for (const feature of boundaries.features) {
    const path = document.createElementNS('http://www.w3.org/2000/svg', 'path');
    path.setAttribute('d', featurePath(feature.geometry, width, height));
    const code = feature.properties.code;
    path.setAttribute('class', `map-country ${classes.get(code) ?? ''}`.trim());
    path.setAttribute('data-code', code);
    const title = document.createElementNS('http://www.w3.org/2000/svg', 'title');
    title.textContent = code;
    path.appendChild(title);
    svg.appendChild(path);
  }
}
