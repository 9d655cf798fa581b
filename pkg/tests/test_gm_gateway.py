import json
import time

import pytest

from playlab.gm_gateway import (
    GmEndpoint,
    GmGateway,
    GmProtocolFault,
    GmUnreachable,
    RoutedAudit,
    RoutedBroadcast,
    RoutedDelivery,
    RoutedOver,
)
from playlab.matchmaking import GameInstance, InstanceMember
from playlab.protocol import Message, decode_message, system_to_gm
from playlab.webio import HttpService, Request, Response, Router


@pytest.fixture(scope="module")
def gateway():
    gw = GmGateway()
    yield gw
    gw.close()


def scripted_service(fn):
    router = Router()
    router.add("POST", "/", fn)
    return HttpService(router, name="stub-gm").start()


def endpoint_for(service, **kwargs):
    return GmEndpoint(game_id="g", url=service.url, **kwargs)


def make_instance(n=2, instance_id="I1"):
    members = [InstanceMember(f"c{i}", f"s{i}") for i in range(n)]
    return GameInstance(instance_id, "g", members, created_at=0.0)


# -- dispatch ---------------------------------------------------------------


def test_dispatch_posts_single_message_variable(gateway):
    captured = {}

    def handler(request: Request) -> Response:
        captured["form"] = request.form()
        captured["content_type"] = request.headers.get("Content-Type")
        return Response(body=b"", content_type="application/json")

    service = scripted_service(handler)
    try:
        out = gateway.dispatch_to_gm(endpoint_for(service), system_to_gm("instance", "I1"))
        assert out == []
    finally:
        service.stop()

    assert "application/x-www-form-urlencoded" in captured["content_type"]
    assert set(captured["form"].keys()) == {"message"}
    wire = decode_message(captured["form"]["message"])
    assert wire.topic == "instance" and wire.sender == "system" and wire.instance_id == "I1"


def test_dispatch_decodes_array_response(gateway):
    def handler(request):
        payload = [
            {"recipient": "client", "topic": "mgResult", "broadcast": True, "instanceId": "I1"},
            {"recipient": "system", "topic": "over", "instanceId": "I1"},
        ]
        return Response(payload)

    service = scripted_service(handler)
    try:
        out = gateway.dispatch_to_gm(
            endpoint_for(service),
            Message(topic="go", sender="client", instance_id="I1", client_id="c0"),
        )
    finally:
        service.stop()
    assert [m.topic for m in out] == ["mgResult", "over"]


def test_dispatch_html_error_page_is_protocol_fault(gateway):
    def handler(request):
        return Response(body=b"<html>boom</html>", content_type="text/html")

    service = scripted_service(handler)
    try:
        with pytest.raises(GmProtocolFault) as err:
            gateway.dispatch_to_gm(endpoint_for(service), system_to_gm("ready", "I7", client_id="c"))
    finally:
        service.stop()
    assert err.value.instance_id == "I7"


def test_dispatch_non_2xx_is_unreachable(gateway):
    def handler(request):
        return Response({"error": "teapot"}, status=500)

    service = scripted_service(handler)
    try:
        with pytest.raises(GmUnreachable):
            gateway.dispatch_to_gm(endpoint_for(service), system_to_gm("instance", "I1"))
    finally:
        service.stop()


def test_dispatch_timeout_is_unreachable(gateway):
    def handler(request):
        time.sleep(1.0)
        return Response(body=b"")

    service = scripted_service(handler)
    try:
        started = time.monotonic()
        with pytest.raises(GmUnreachable):
            gateway.dispatch_to_gm(
                endpoint_for(service, timeout_s=0.2), system_to_gm("instance", "I1")
            )
        assert time.monotonic() - started < 1.0
    finally:
        service.stop()


def test_dispatch_connection_refused_is_unreachable(gateway):
    dead = GmEndpoint(game_id="g", url="http://127.0.0.1:1/", timeout_s=0.3)
    with pytest.raises(GmUnreachable):
        gateway.dispatch_to_gm(dead, system_to_gm("instance", "I1"))


def test_dispatch_oversize_body_is_protocol_fault(gateway):
    blob = json.dumps({"topic": "x", "params": "y" * 4096}).encode()

    def handler(request):
        return Response(body=blob, content_type="application/json")

    service = scripted_service(handler)
    try:
        with pytest.raises(GmProtocolFault) as err:
            gateway.dispatch_to_gm(
                endpoint_for(service, max_response_bytes=1024), system_to_gm("instance", "I1")
            )
    finally:
        service.stop()
    assert "exceeds" in str(err.value)


def test_endpoint_validates_url():
    with pytest.raises(ValueError):
        GmEndpoint(game_id="g", url="")
    with pytest.raises(ValueError):
        GmEndpoint(game_id="g", url="ftp://example.com/x")
    with pytest.raises(ValueError):
        GmEndpoint(game_id="g", url="http://ok/", timeout_s=0)


# -- routing -----------------------------------------------------------------


def test_route_targeted_delivery():
    instance = make_instance()
    msg = Message(topic="mgChoices", recipient="client", client_id="c1", instance_id="I1")
    plan = GmGateway.route_gm_messages(instance, [msg])
    assert len(plan) == 1
    item = plan[0]
    assert isinstance(item, RoutedDelivery)
    assert item.session_id == "s1"
    assert item.message.sender == "manager"  # stamped for the SDK's dispatch


def test_route_broadcast_and_over():
    instance = make_instance()
    plan = GmGateway.route_gm_messages(
        instance,
        [
            Message(topic="mgResult", recipient="client", broadcast=True, instance_id="I1"),
            Message(topic="over", recipient="system", instance_id="I1", params={"c0": 1}),
        ],
    )
    assert isinstance(plan[0], RoutedBroadcast)
    assert isinstance(plan[1], RoutedOver)
    assert plan[1].scores == {"c0": 1}


def test_route_unknown_client_audits_but_keeps_siblings():
    instance = make_instance()
    plan = GmGateway.route_gm_messages(
        instance,
        [
            Message(topic="a", recipient="client", client_id="ghost", instance_id="I1"),
            Message(topic="b", recipient="client", client_id="c0", instance_id="I1"),
        ],
    )
    assert isinstance(plan[0], RoutedAudit)
    assert isinstance(plan[1], RoutedDelivery)


def test_route_foreign_instance_rejects_whole_batch():
    instance = make_instance()
    with pytest.raises(GmProtocolFault):
        GmGateway.route_gm_messages(
            instance,
            [
                Message(topic="a", recipient="client", client_id="c0", instance_id="I1"),
                Message(topic="b", recipient="client", client_id="c0", instance_id="OTHER"),
            ],
        )


def test_route_over_with_bad_scores_still_closes():
    instance = make_instance()
    plan = GmGateway.route_gm_messages(
        instance, [Message(topic="over", recipient="system", instance_id="I1", params=[1, 2])]
    )
    assert isinstance(plan[0], RoutedAudit)
    assert isinstance(plan[1], RoutedOver)
    assert plan[1].scores is None


def test_route_ignores_gm_system_chatter():
    instance = make_instance()
    plan = GmGateway.route_gm_messages(
        instance,
        [Message(topic="error", recipient="system", instance_id="I1", params={"reason": "x"})],
    )
    assert isinstance(plan[0], RoutedAudit)


def test_route_preserves_existing_sender():
    instance = make_instance()
    msg = Message(topic="t", sender="manager", recipient="client", client_id="c0", instance_id="I1")
    plan = GmGateway.route_gm_messages(instance, [msg])
    assert plan[0].message is msg
