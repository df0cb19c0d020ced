"""Parametric air-ground message channel.

Unit-disk connectivity, constant latency, Bernoulli loss. Range and loss
are evaluated at the delivery tick only; loss draws use the counter-based
RNG keyed by (msg_id, recipient), so adding traffic never flips the loss
outcome of an existing message.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field

from . import rng
from .errors import PayloadTooLarge, UnknownSender


@dataclass(frozen=True)
class ChannelParams:
    range: float = 300.0
    latency: int = 0
    loss_prob: float = 0.0
    max_payload: int = 4096

    def __post_init__(self):
        if self.range <= 0 or self.latency < 0 or not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("bad channel params")

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelParams":
        return cls(float(d.get("range", 300.0)), int(d.get("latency", 0)),
                   float(d.get("loss_prob", 0.0)), int(d.get("max_payload", 4096)))


@dataclass(frozen=True)
class Message:
    msg_id: str          # "<sender>:<seq>"
    sender: str
    recipients: tuple[str, ...] | str  # explicit ids or "broadcast"
    payload: bytes
    send_tick: int
    seq: int

    def payload_b64(self) -> str:
        return base64.b64encode(self.payload).decode("ascii")

    def to_dict(self) -> dict:
        return {
            "msg_id": self.msg_id, "sender": self.sender,
            "recipients": self.recipients if isinstance(self.recipients, str)
            else list(self.recipients),
            "payload_b64": self.payload_b64(),
            "send_tick": self.send_tick, "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        rec = d["recipients"]
        return cls(d["msg_id"], d["sender"],
                   rec if isinstance(rec, str) else tuple(rec),
                   base64.b64decode(d["payload_b64"]), int(d["send_tick"]), int(d["seq"]))


@dataclass(frozen=True)
class Delivery:
    message: Message
    recipient: str
    status: str            # delivered | out_of_range | random_loss | recipient_gone
    tick: int


def make_message(sender: str, recipients, payload: bytes, send_tick: int,
                 seq: int, params: ChannelParams, known_sender: bool) -> Message:
    if not known_sender:
        raise UnknownSender(sender)
    if len(payload) > params.max_payload:
        raise PayloadTooLarge(f"{len(payload)} > {params.max_payload}")
    rec = "broadcast" if recipients == "broadcast" else tuple(recipients)
    return Message(f"{sender}:{seq}", sender, rec, payload, send_tick, seq)


def resolve_deliveries(pending: list[Message], tick: int, params: ChannelParams,
                       positions: dict[str, tuple[float, float, float]],
                       last_positions: dict[str, tuple[float, float, float]],
                       seed: int) -> tuple[list[Message], list[Delivery]]:
    """Split pending messages into (still pending, resolved deliveries).

    positions: entities alive at the delivery tick.  last_positions: final
    known pose of every entity ever seen (used when the sender despawned).
    """
    still, resolved = [], []
    due = [m for m in pending if m.send_tick + params.latency <= tick]
    still = [m for m in pending if m.send_tick + params.latency > tick]
    # deterministic processing order regardless of queue construction
    due.sort(key=lambda m: (m.send_tick, m.sender, m.seq))
    for m in due:
        sender_pos = positions.get(m.sender, last_positions.get(m.sender))
        if m.recipients == "broadcast":
            targets = sorted(r for r in positions if r != m.sender)
        else:
            targets = sorted(m.recipients)
        for r in targets:
            rpos = positions.get(r)
            if rpos is None:
                resolved.append(Delivery(m, r, "recipient_gone", tick))
                continue
            if sender_pos is None:
                resolved.append(Delivery(m, r, "out_of_range", tick))
                continue
            d = ((sender_pos[0] - rpos[0]) ** 2 + (sender_pos[1] - rpos[1]) ** 2
                 + (sender_pos[2] - rpos[2]) ** 2) ** 0.5
            if d > params.range:
                resolved.append(Delivery(m, r, "out_of_range", tick))
            elif rng.uniform(seed, "comms", m.msg_id + "|" + r, tick) < params.loss_prob:
                resolved.append(Delivery(m, r, "random_loss", tick))
            else:
                resolved.append(Delivery(m, r, "delivered", tick))
    return still, resolved
