/** Console view state and its pure transitions.
 *
 * Two invariants the transitions protect:
 *  - the circle list is exactly the latest GET /zones payload, never merged;
 *  - the banner reflects the most recent GET /safety response for the
 *    current marker; a failed or superseded request flips a stale flag
 *    instead of leaving a silently wrong banner.
 */

import type { LatLon, NotificationPayload, VerdictPayload, ZonePayload } from "./types.js";

export type Persona = "citizen" | "operator";

export interface Session {
  token: string;
  role: string;
  principalId: string;
  username?: string;
}

export interface Toast {
  id: string;
  message: string;
  issuedAt: string;
}

export interface ViewState {
  persona: Persona;
  session: Session | null;
  zones: ZonePayload[];
  zonesStale: boolean;
  marker: LatLon | null;
  verdict: VerdictPayload | null;
  verdictStale: boolean;
  feed: NotificationPayload[];
  seenNotificationIds: Set<string>;
  toasts: Toast[];
}

export function initialState(): ViewState {
  return {
    persona: "citizen",
    session: null,
    zones: [],
    zonesStale: false,
    marker: null,
    verdict: null,
    verdictStale: false,
    feed: [],
    seenNotificationIds: new Set(),
    toasts: [],
  };
}

export function setSession(state: ViewState, session: Session | null): ViewState {
  return { ...state, session };
}

export function setPersona(state: ViewState, persona: Persona): ViewState {
  return { ...state, persona };
}

/** Replace the circle list with the server's answer, one to one. */
export function applyZones(state: ViewState, zones: ZonePayload[]): ViewState {
  return { ...state, zones: [...zones], zonesStale: false };
}

export function markZonesStale(state: ViewState): ViewState {
  return { ...state, zonesStale: true };
}

/** Moving the marker invalidates the old verdict until the server answers
 * for the new position. */
export function setMarker(state: ViewState, marker: LatLon | null): ViewState {
  return { ...state, marker, verdict: null, verdictStale: false };
}

export function applyVerdict(state: ViewState, verdict: VerdictPayload): ViewState {
  return { ...state, verdict, verdictStale: false };
}

export function markVerdictStale(state: ViewState): ViewState {
  return { ...state, verdictStale: true };
}

/** Add an alert to the feed and raise a toast, once per notification id
 * even when the stream and a fetch both deliver it. */
export function pushNotification(state: ViewState, n: NotificationPayload): ViewState {
  if (state.seenNotificationIds.has(n.notification_id)) return state;
  const seen = new Set(state.seenNotificationIds);
  seen.add(n.notification_id);
  return {
    ...state,
    feed: [n, ...state.feed],
    seenNotificationIds: seen,
    toasts: [
      ...state.toasts,
      { id: n.notification_id, message: n.message, issuedAt: n.issued_at },
    ],
  };
}

export function dismissToast(state: ViewState, id: string): ViewState {
  return { ...state, toasts: state.toasts.filter((t) => t.id !== id) };
}

export type BannerTone = "safe" | "unsafe" | "pending";

export interface BannerView {
  tone: BannerTone;
  text: string;
  stale: boolean;
}

/** The banner line, straight from server values (distance shown verbatim). */
export function bannerView(state: ViewState): BannerView {
  if (!state.marker) {
    return { tone: "pending", text: "Place your marker on the map", stale: false };
  }
  if (!state.verdict) {
    return { tone: "pending", text: "Checking this position...", stale: state.verdictStale };
  }
  const distance = state.verdict.distance_to_nearest_zone_center_m;
  const suffix =
    distance === null ? "" : ` (nearest zone center: ${distance.toFixed(1)} m)`;
  if (state.verdict.status === "unsafe") {
    return { tone: "unsafe", text: `You are in an UNSAFE area${suffix}`, stale: state.verdictStale };
  }
  return { tone: "safe", text: `You are in a safe area${suffix}`, stale: state.verdictStale };
}
