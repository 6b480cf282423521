/** Wire types, mirroring the server's JSON payloads field for field. */

export interface LatLon {
  latitude: number;
  longitude: number;
}

export interface ZonePayload {
  zone_id: string;
  center: LatLon;
  radius_m: number;
  created_at: string;
}

export interface VerdictPayload {
  status: "safe" | "unsafe";
  matched_zone_id: string | null;
  distance_to_nearest_zone_center_m: number | null;
}

export interface NotificationPayload {
  notification_id: string;
  zone_id: string;
  zone_center: LatLon;
  zone_radius_m: number;
  distance_m: number;
  issued_at: string;
  message: string;
  delivered: boolean;
}

export interface UserPayload {
  user_id: string;
  username: string;
  full_name: string;
  blood_group: string;
  infection_date: string | null;
  registered_at: string;
  last_location: (LatLon & { observed_at: string }) | null;
}

export interface PatientPayload {
  patient_id: string;
  user_id: string | null;
  reported_by: string;
  status: "Active" | "Recovered";
  confirmed_at: string;
}

export interface LoginPayload {
  token: string;
  role: string;
  principal_id: string;
}

export interface LocationReportResponse {
  report: {
    report_id: string;
    patient_id: string;
    latitude: number;
    longitude: number;
    observed_at: string;
  };
  zone: ZonePayload;
  notified_user_count: number;
}

export interface RegistrationFields {
  full_name: string;
  username: string;
  password: string;
  nid: string;
  blood_group: string;
  infection_date?: string | null;
}

export interface BoundingBox {
  south: number;
  west: number;
  north: number;
  east: number;
}
