"""Unit and property tests for the pure domain logic."""

import random
import re
import string
from datetime import datetime, timedelta, timezone

import pytest

from anonroom import domain
from anonroom.domain import (
    MessageText,
    Message,
    Scope,
    Tombstone,
    canonical_private_scope,
    expand_shortcodes,
    format_timestamp,
    handle_from_entropy,
    new_handle,
    scope_from_wire,
    validate_display_name,
    validate_message_text,
    validate_status,
    visible_to,
)
from anonroom.errors import (
    EmptyMessage,
    HandleSpaceExhausted,
    InvalidDisplayName,
    InvalidStatus,
    InvalidText,
    MessageTooLong,
    SelfScope,
)


# -- independent oracles -------------------------------------------------------

_ORACLE_PATTERN = re.compile(
    "|".join(
        re.escape(code)
        for code in sorted(domain.SHORTCODES, key=len, reverse=True)
    )
)


def oracle_expand(text: str) -> str:
    """Regex-based expansion oracle: single pass, longest alternative first."""
    return _ORACLE_PATTERN.sub(lambda m: domain.SHORTCODES[m.group(0)], text)


def oracle_format_12h(ts_ms: int, utc_offset_min: int) -> str:
    """strftime-based 12-hour formatter oracle."""
    tz = timezone(timedelta(minutes=utc_offset_min))
    dt = datetime.fromtimestamp(ts_ms / 1000.0, tz)
    hour = dt.strftime("%I").lstrip("0")
    return f"{hour}:{dt.strftime('%M')} {dt.strftime('%p').lower()}"


def oracle_visible(msg, viewer, memberships, tombstones) -> bool:
    """Brute-force restatement of the visibility rule."""
    if msg.scope.kind == "public":
        admitted = True
    elif msg.scope.kind == "group":
        admitted = msg.scope.group_id in memberships
    elif msg.scope.kind == "private":
        admitted = viewer in msg.scope.pair
    else:
        admitted = False
    hidden = any(
        t.owner == viewer and t.scope == msg.scope and msg.seq <= t.upto_seq
        for t in tombstones
    )
    return admitted and not hidden


# -- message text validation ------------------------------------------------------


def test_validate_short_text_ok():
    mt = validate_message_text("hi")
    assert mt.raw == "hi"
    assert mt.expanded == "hi"


def test_validate_at_255_boundary():
    mt = validate_message_text("a" * 255)
    assert mt.raw == "a" * 255


def test_validate_over_255_rejected():
    with pytest.raises(MessageTooLong):
        validate_message_text("a" * 256)


def test_validate_empty_rejected():
    with pytest.raises(EmptyMessage):
        validate_message_text("")


def test_whitespace_only_allowed():
    mt = validate_message_text("   ")
    assert mt.raw == "   "


def test_255_counts_scalar_values_not_bytes():
    # 255 multi-byte characters are fine even though they exceed 255 bytes.
    text = "é" * 255
    assert len(text.encode()) > 255
    assert validate_message_text(text).raw == text
    with pytest.raises(MessageTooLong):
        validate_message_text("\U0001F642" * 256)


def test_exact_boundary_property():
    rng = random.Random(2550)
    alphabet = string.ascii_letters + " :)(<3;PDé\U0001F642"
    for _ in range(200):
        n = rng.randint(1, 255)
        s = "".join(rng.choice(alphabet) for _ in range(n))
        assert validate_message_text(s).raw == s
    for _ in range(50):
        n = rng.randint(256, 400)
        s = "".join(rng.choice(alphabet) for _ in range(n))
        with pytest.raises(MessageTooLong):
            validate_message_text(s)


def test_lone_surrogate_rejected():
    with pytest.raises(InvalidText):
        validate_message_text("bad \ud800 text")


# -- shortcode expansion -----------------------------------------------------------


def test_expand_identity_without_codes():
    assert expand_shortcodes("hello") == "hello"


def test_expand_single_smiley():
    assert expand_shortcodes(":)") == "\U0001F642"


def test_expand_mixed_line():
    # frozen from the regex oracle
    assert expand_shortcodes("hi :) bye <3") == "hi \U0001F642 bye ❤"
    assert oracle_expand("hi :) bye <3") == "hi \U0001F642 bye ❤"


def test_expand_all_table_entries():
    for code, emoji in domain.SHORTCODES.items():
        assert expand_shortcodes(code) == emoji


def test_expand_no_reexpansion():
    # an expanded result containing shortcode-ish text is never rescanned
    for code in domain.SHORTCODES:
        once = expand_shortcodes(code)
        assert expand_shortcodes(once) == once


def test_expand_matches_oracle_on_random_strings():
    rng = random.Random(424242)
    alphabet = string.ascii_letters + " :)(<3D"
    for _ in range(10_000):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        assert expand_shortcodes(s) == oracle_expand(s)


def test_expand_idempotent_on_random_strings():
    rng = random.Random(77)
    alphabet = string.ascii_letters + " :;)(<3DP"
    for _ in range(2_000):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        once = expand_shortcodes(s)
        assert expand_shortcodes(once) == once


# -- timestamps -------------------------------------------------------------------


def test_format_afternoon():
    # 2021-05-03 14:05:42 UTC
    assert format_timestamp(1620050742000, 0) == "2:05 pm"


def test_format_after_midnight():
    # 2021-05-03 00:30:42 UTC
    assert format_timestamp(1620001842000, 0) == "12:30 am"


def test_format_noon():
    # 2021-05-03 12:00:42 UTC
    assert format_timestamp(1620043242000, 0) == "12:00 pm"


def test_format_morning_no_leading_zero():
    # 2021-05-03 09:07:42 UTC
    assert format_timestamp(1620032862000, 0) == "9:07 am"


def test_format_respects_offset():
    # 14:05 UTC is 9:35 am at UTC-04:30
    assert format_timestamp(1620050742000, -270) == "9:35 am"


def test_format_matches_oracle_on_random_inputs():
    rng = random.Random(9)
    for _ in range(10_000):
        ts_ms = rng.randint(0, 4_102_444_800_000)  # up to year 2100
        offset = rng.randint(-840, 840)
        assert format_timestamp(ts_ms, offset) == oracle_format_12h(ts_ms, offset)


# -- scopes ----------------------------------------------------------------------


def test_private_scope_orders_pair():
    s = canonical_private_scope("guest-aaaaaa", "guest-bbbbbb")
    assert s.pair == ("guest-aaaaaa", "guest-bbbbbb")


def test_private_scope_symmetric():
    a, b = "guest-bbbbbb", "guest-aaaaaa"
    assert canonical_private_scope(a, b) == canonical_private_scope(b, a)


def test_private_scope_rejects_self():
    with pytest.raises(SelfScope):
        canonical_private_scope("guest-aaaaaa", "guest-aaaaaa")


def test_private_scope_symmetry_property():
    rng = random.Random(5)
    for _ in range(500):
        a = handle_from_entropy(rng.randbytes(3))
        b = handle_from_entropy(rng.randbytes(3))
        if a == b:
            continue
        assert canonical_private_scope(a, b) == canonical_private_scope(b, a)


def test_scope_keys_distinct():
    scopes = [
        Scope.public(),
        Scope.group("g-000001"),
        Scope.group("g-000002"),
        canonical_private_scope("guest-aaaaaa", "guest-bbbbbb"),
        canonical_private_scope("guest-aaaaaa", "guest-cccccc"),
    ]
    keys = [s.key() for s in scopes]
    assert len(set(keys)) == len(keys)


def test_scope_wire_round_trip():
    for scope in (
        Scope.public(),
        Scope.group("g-0a1b2c"),
        canonical_private_scope("guest-bbbbbb", "guest-aaaaaa"),
    ):
        assert scope_from_wire(scope.to_wire()) == scope


# -- visibility -------------------------------------------------------------------


def _msg(seq: int, scope: Scope) -> Message:
    return Message(
        seq=seq,
        ts_ms=1_620_000_000_000,
        sender="guest-aaaaaa",
        scope=scope,
        text=MessageText("x", "x"),
    )


def test_public_visible_to_anyone():
    msg = _msg(1, Scope.public())
    assert visible_to(msg, "guest-zzzzzz", set(), []) is True


def test_private_invisible_to_third_party():
    msg = _msg(1, canonical_private_scope("guest-aaaaaa", "guest-bbbbbb"))
    assert visible_to(msg, "guest-cccccc", set(), []) is False


def test_tombstone_hides_covered_public_message():
    msg = _msg(5, Scope.public())
    tomb = Tombstone("guest-bbbbbb", Scope.public(), 7)
    assert visible_to(msg, "guest-bbbbbb", set(), [tomb]) is False


def test_tombstone_boundary_is_inclusive():
    tomb = Tombstone("guest-bbbbbb", Scope.public(), 5)
    assert visible_to(_msg(5, Scope.public()), "guest-bbbbbb", set(), [tomb]) is False
    assert visible_to(_msg(6, Scope.public()), "guest-bbbbbb", set(), [tomb]) is True


def test_visibility_truth_table():
    """All 10 combinations of scope relation x tombstone coverage.

    Expected column frozen from the brute-force oracle.
    """
    viewer = "guest-vvvvvv"
    party = canonical_private_scope(viewer, "guest-aaaaaa")
    third = canonical_private_scope("guest-aaaaaa", "guest-bbbbbb")
    cases = [
        # (scope, memberships, expected without tombstone, expected with)
        (Scope.public(), set(), True, False),
        (Scope.group("g-000001"), {"g-000001"}, True, False),
        (Scope.group("g-000001"), set(), False, False),
        (party, set(), True, False),
        (third, set(), False, False),
    ]
    for scope, memberships, want_plain, want_tombed in cases:
        msg = _msg(3, scope)
        covering = [Tombstone(viewer, scope, 3)]
        assert visible_to(msg, viewer, memberships, []) is want_plain
        assert visible_to(msg, viewer, memberships, covering) is want_tombed
        # and the independent oracle agrees on every cell
        assert oracle_visible(msg, viewer, memberships, []) is want_plain
        assert oracle_visible(msg, viewer, memberships, covering) is want_tombed


def test_visibility_matches_oracle_on_random_cases():
    rng = random.Random(31337)
    handles = [f"guest-{i:06x}" for i in range(8)]
    groups = [f"g-{i:06x}" for i in range(3)]
    for _ in range(2_000):
        kind = rng.choice(["public", "group", "private"])
        if kind == "public":
            scope = Scope.public()
        elif kind == "group":
            scope = Scope.group(rng.choice(groups))
        else:
            a, b = rng.sample(handles, 2)
            scope = canonical_private_scope(a, b)
        msg = _msg(rng.randint(1, 20), scope)
        viewer = rng.choice(handles)
        memberships = {g for g in groups if rng.random() < 0.5}
        tombstones = []
        if rng.random() < 0.5:
            tombstones.append(Tombstone(viewer, scope, rng.randint(1, 20)))
        if rng.random() < 0.3:
            tombstones.append(Tombstone(viewer, Scope.public(), rng.randint(1, 20)))
        assert visible_to(msg, viewer, memberships, tombstones) == oracle_visible(
            msg, viewer, memberships, tombstones
        )


# -- handles --------------------------------------------------------------------


def test_handle_from_zero_entropy():
    assert handle_from_entropy(b"\x00\x00\x00") == "guest-000000"


def test_handle_hex_encoding():
    assert handle_from_entropy(b"\x3f\xa0\x9c") == "guest-3fa09c"


def test_new_handle_fresh():
    assert new_handle(set(), lambda: b"\x00\x00\x00") == "guest-000000"


def test_new_handle_retries_on_collision():
    feed = iter([b"\x00\x00\x00", b"\x00\x00\x01"])
    handle = new_handle({"guest-000000"}, lambda: next(feed))
    assert handle == "guest-000001"


def test_new_handle_exhaustion_after_100_collisions():
    calls = 0

    def colliding() -> bytes:
        nonlocal calls
        calls += 1
        return b"\x00\x00\x00"

    with pytest.raises(HandleSpaceExhausted):
        new_handle({"guest-000000"}, colliding)
    assert calls == 100


def test_minted_handles_match_pattern():
    rng = random.Random(11)
    for _ in range(200):
        handle = new_handle(set(), lambda: rng.randbytes(3))
        assert domain.HANDLE_RE.fullmatch(handle)
        assert len(handle) == 12


# -- display names and status -----------------------------------------------------


def test_display_name_bounds():
    assert validate_display_name("Ada") == "Ada"
    assert validate_display_name("x" * 32) == "x" * 32
    with pytest.raises(InvalidDisplayName):
        validate_display_name("")
    with pytest.raises(InvalidDisplayName):
        validate_display_name("x" * 33)


def test_display_name_rejects_control_chars():
    with pytest.raises(InvalidDisplayName):
        validate_display_name("bad\x00name")
    with pytest.raises(InvalidDisplayName):
        validate_display_name("two\nlines")


def test_status_bounds():
    assert validate_status("") == ""
    assert validate_status("x" * 64) == "x" * 64
    with pytest.raises(InvalidStatus):
        validate_status("x" * 65)
