"""Minimal topic-based publish/subscribe middleware."""

from .bus import LocalBus, Node, Publisher, Subscription, TcpBus
from .codec import (
    CodecError,
    FrameMessage,
    PixelCountMismatch,
    TrailingBytes,
    TruncatedHeader,
    TruncatedPayload,
    decode_message,
    encode_message,
)
from .registry import (
    InvalidTopicName,
    Registry,
    RegistryClient,
    RegistryServer,
    RegistryUnavailable,
    handle_line,
    validate_topic,
)
