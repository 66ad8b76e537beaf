"""Generic HTTP+JSON client that pulls hourly carbon-intensity history into canonical CSVs."""
from __future__ import annotations

import io
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping

import httpx

from .trace import CSV_HEADER, HOUR, TraceError, format_timestamp, load_trace, parse_timestamp

log = logging.getLogger(__name__)

TOKEN_ENV = "CARBON_API_TOKEN"
DEFAULT_FIELDS = {"zone": "zone", "datetime": "datetime", "carbonIntensity": "carbonIntensity"}
RETRY_STATUS = {429, 500, 502, 503, 504}


class FetchError(RuntimeError):
    pass


@dataclass
class FetchSpec:
    endpoint: str
    regions: list[str]
    start: datetime
    end: datetime
    token_env: str = TOKEN_ENV
    fields: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_FIELDS))
    records_key: str = "history"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 30.0

    def __post_init__(self):
        for ph in ("{region}", "{start}", "{end}"):
            if ph not in self.endpoint:
                raise FetchError(f"endpoint template lacks {ph} placeholder")
        if not self.end > self.start:
            raise FetchError("fetch end must be after start")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "FetchSpec":
        known = {k: v for k, v in cfg.items() if k in cls.__dataclass_fields__}
        known["start"] = parse_timestamp(cfg["start"])
        known["end"] = parse_timestamp(cfg["end"])
        known["fields"] = {**DEFAULT_FIELDS, **cfg.get("fields", {})}
        return cls(**known)


def _records(payload, spec: FetchSpec, region: str) -> list[tuple[datetime, float]]:
    if isinstance(payload, Mapping):
        if spec.records_key not in payload:
            raise FetchError(f"{region}: response has no {spec.records_key!r} list")
        payload = payload[spec.records_key]
    if not isinstance(payload, list):
        raise FetchError(f"{region}: response is not a list of records")
    f_zone, f_dt, f_ci = (spec.fields[k] for k in ("zone", "datetime", "carbonIntensity"))
    out = {}
    for rec in payload:
        if not isinstance(rec, Mapping) or not {f_zone, f_dt, f_ci} <= set(rec):
            raise FetchError(f"{region}: record missing one of {f_zone!r}, {f_dt!r}, {f_ci!r}: {rec!r}")
        if rec[f_zone] != region or rec[f_ci] is None:
            continue
        ts = parse_timestamp(str(rec[f_dt]))
        if spec.start <= ts < spec.end:
            out[ts] = float(rec[f_ci])
    return sorted(out.items())


def _get_json(client: httpx.Client, url: str, headers, spec: FetchSpec, sleep):
    last = None
    for attempt in range(spec.attempts):
        try:
            resp = client.get(url, headers=headers)
            if resp.status_code in RETRY_STATUS:
                last = FetchError(f"HTTP {resp.status_code} from {url}")
            else:
                resp.raise_for_status()
                return resp.json()
        except httpx.HTTPStatusError as exc:
            raise FetchError(f"HTTP {exc.response.status_code} from {url}") from None
        except (httpx.TransportError, ValueError) as exc:
            last = FetchError(f"request to {url} failed: {exc}")
        if attempt + 1 < spec.attempts:
            delay = spec.backoff * 2**attempt
            log.warning("%s; retrying in %.2fs", last, delay)
            sleep(delay)
    raise last


def _complete(path: Path, region: str, spec: FetchSpec) -> bool:
    try:
        t = load_trace(path.read_bytes(), region)
    except (OSError, TraceError):
        return False
    return t.start_time <= spec.start and t.end_time >= spec.end - HOUR


def _write_csv(path: Path, region: str, rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for ts, ci in rows:
        buf.write(f"{format_timestamp(ts)},{region},{ci!r}\n")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def fetch(
    spec: FetchSpec,
    out_dir,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, str]:
    """Fetch each region into ``out_dir/<region>.csv``; returns region -> status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    token = os.environ.get(spec.token_env)
    headers = {spec.auth_header: f"{spec.auth_scheme} {token}".strip()} if token else {}
    own = client is None
    client = client or httpx.Client(timeout=spec.timeout)
    status = {}
    try:
        for region in spec.regions:
            path = out / f"{region}.csv"
            if path.exists() and _complete(path, region, spec):
                status[region] = "skipped"
                continue
            url = spec.endpoint.format(
                region=region, start=format_timestamp(spec.start), end=format_timestamp(spec.end)
            )
            rows = _records(_get_json(client, url, headers, spec, sleep), spec, region)
            if not rows:
                raise FetchError(f"{region}: no records in response")
            _write_csv(path, region, rows)
            status[region] = f"wrote {len(rows)} rows"
    finally:
        if own:
            client.close()
    return status
