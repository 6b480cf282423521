/** Typed client for the tracing-service HTTP API.
 *
 * The console shows every verdict, distance, and radius verbatim from these
 * responses; nothing geodesic is computed client-side.
 */

import type {
  BoundingBox,
  LatLon,
  LocationReportResponse,
  LoginPayload,
  NotificationPayload,
  PatientPayload,
  RegistrationFields,
  UserPayload,
  VerdictPayload,
  ZonePayload,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly fieldErrors: Record<string, string> = {},
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

interface ValidationItem {
  loc?: Array<string | number>;
  msg?: string;
}

/** Map a non-2xx response body onto a message plus per-field messages,
 * mirroring the server's 400 detail structure. */
export function toApiError(status: number, body: unknown): ApiRequestError {
  let message = `HTTP ${status}`;
  const fieldErrors: Record<string, string> = {};
  if (body && typeof body === "object") {
    const record = body as Record<string, unknown>;
    if (typeof record.error === "string") message = record.error;
    if (typeof record.detail === "string") message = record.detail;
    if (Array.isArray(record.detail)) {
      for (const item of record.detail as ValidationItem[]) {
        const loc = item.loc ?? [];
        const field = loc.length ? String(loc[loc.length - 1]) : "";
        if (field) fieldErrors[field] = item.msg ?? "invalid value";
      }
      if (Object.keys(fieldErrors).length) message = "validation failed";
    }
  }
  // domain errors name the offending field in their message; surface them inline
  const lowered = message.toLowerCase();
  if (lowered.includes("username")) fieldErrors.username ??= message;
  if (lowered.includes("nid")) fieldErrors.nid ??= message;
  if (lowered.includes("blood group")) fieldErrors.blood_group ??= message;
  return new ApiRequestError(status, message, fieldErrors);
}

export class ApiClient {
  token: string | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const parsed: unknown = text ? JSON.parse(text) : null;
    if (!resp.ok) throw toApiError(resp.status, parsed);
    return parsed as T;
  }

  register(fields: RegistrationFields): Promise<UserPayload> {
    return this.request("POST", "/users", fields);
  }

  async login(username: string, password: string): Promise<LoginPayload> {
    const session = await this.request<LoginPayload>("POST", "/auth/login", {
      username,
      password,
    });
    this.token = session.token;
    return session;
  }

  putMyLocation(position: LatLon, observedAt: string): Promise<UserPayload> {
    return this.request("PUT", "/me/location", {
      latitude: position.latitude,
      longitude: position.longitude,
      observed_at: observedAt,
    });
  }

  submitTestReport(
    result: "Positive" | "Negative",
    subject: { full_name?: string; nid?: string; user_id?: string } = {},
  ): Promise<{ patient: PatientPayload | null }> {
    return this.request("POST", "/reports/tests", { result, subject });
  }

  submitPatientLocation(
    patientId: string,
    position: LatLon,
    observedAt: string,
  ): Promise<LocationReportResponse> {
    return this.request("POST", "/reports/locations", {
      patient_id: patientId,
      latitude: position.latitude,
      longitude: position.longitude,
      observed_at: observedAt,
    });
  }

  markRecovered(patientId: string): Promise<PatientPayload> {
    return this.request("POST", `/patients/${encodeURIComponent(patientId)}/recovered`);
  }

  safety(position: LatLon): Promise<VerdictPayload> {
    const params = new URLSearchParams({
      lat: String(position.latitude),
      lon: String(position.longitude),
    });
    return this.request("GET", `/safety?${params}`);
  }

  async zones(box: BoundingBox): Promise<ZonePayload[]> {
    const params = new URLSearchParams({
      south: String(box.south),
      west: String(box.west),
      north: String(box.north),
      east: String(box.east),
    });
    const body = await this.request<{ zones: ZonePayload[] }>("GET", `/zones?${params}`);
    return body.zones;
  }

  async myNotifications(since?: string): Promise<NotificationPayload[]> {
    const query = since ? `?${new URLSearchParams({ since })}` : "";
    const body = await this.request<{ notifications: NotificationPayload[] }>(
      "GET",
      `/me/notifications${query}`,
    );
    return body.notifications;
  }

  streamUrl(): string {
    return `${this.baseUrl}/stream`;
  }
}
