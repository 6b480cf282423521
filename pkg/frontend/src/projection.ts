/** Screen projection for the map pane.
 *
 * A local equirectangular view around the viewport center: latitude maps
 * linearly to pixels, longitude is compressed by cos(center latitude) so a
 * server-reported circle renders as a circle. Pure display scaling; the
 * scale constant matches the server's spherical model so radius_m values
 * from zone payloads render at true size.
 */

import type { BoundingBox, LatLon } from "./types.js";

/** Meridian arc length of one degree on the server's 6371 km sphere. */
export const METERS_PER_DEGREE_LAT = 111194.92664455873;

export interface Viewport {
  center: LatLon;
  /** vertical scale: screen pixels per degree of latitude */
  pxPerDegLat: number;
  widthPx: number;
  heightPx: number;
}

function lonScale(vp: Viewport): number {
  return vp.pxPerDegLat * Math.cos((vp.center.latitude * Math.PI) / 180);
}

export function project(vp: Viewport, p: LatLon): { x: number; y: number } {
  return {
    x: vp.widthPx / 2 + (p.longitude - vp.center.longitude) * lonScale(vp),
    y: vp.heightPx / 2 + (vp.center.latitude - p.latitude) * vp.pxPerDegLat,
  };
}

export function unproject(vp: Viewport, x: number, y: number): LatLon {
  return {
    latitude: vp.center.latitude - (y - vp.heightPx / 2) / vp.pxPerDegLat,
    longitude: vp.center.longitude + (x - vp.widthPx / 2) / lonScale(vp),
  };
}

export function circleRadiusPx(vp: Viewport, radiusM: number): number {
  return (radiusM / METERS_PER_DEGREE_LAT) * vp.pxPerDegLat;
}

/** Geographic box covered by the viewport, for the GET /zones query. */
export function viewportBox(vp: Viewport): BoundingBox {
  const northWest = unproject(vp, 0, 0);
  const southEast = unproject(vp, vp.widthPx, vp.heightPx);
  return {
    south: Math.max(-90, southEast.latitude),
    west: Math.max(-180, northWest.longitude),
    north: Math.min(90, northWest.latitude),
    east: Math.min(180, southEast.longitude),
  };
}
