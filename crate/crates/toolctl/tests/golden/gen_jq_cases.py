"""Regenerate jq_cases.json with libjq (pip install jq) as the oracle."""

import json
import pathlib

import jq

HERE = pathlib.Path(__file__).parent


def issue(n):
    base = f"https://api.github.test/repos/acme/web/issues/{n}"
    user = {
        "login": "octo",
        "id": 583231,
        "node_id": "MDQ6VXNlcjU4MzIzMQ==",
        "avatar_url": "https://avatars.github.test/u/583231?v=4",
        "gravatar_id": "",
        "url": "https://api.github.test/users/octo",
        "html_url": "https://github.test/octo",
        "followers_url": "https://api.github.test/users/octo/followers",
        "following_url": "https://api.github.test/users/octo/following{/other_user}",
        "gists_url": "https://api.github.test/users/octo/gists{/gist_id}",
        "starred_url": "https://api.github.test/users/octo/starred{/owner}{/repo}",
        "subscriptions_url": "https://api.github.test/users/octo/subscriptions",
        "organizations_url": "https://api.github.test/users/octo/orgs",
        "repos_url": "https://api.github.test/users/octo/repos",
        "events_url": "https://api.github.test/users/octo/events{/privacy}",
        "received_events_url": "https://api.github.test/users/octo/received_events",
        "type": "User",
        "site_admin": False,
    }
    return {
        "url": base,
        "repository_url": "https://api.github.test/repos/acme/web",
        "labels_url": base + "/labels{/name}",
        "comments_url": base + "/comments",
        "events_url": base + "/events",
        "html_url": f"https://github.test/acme/web/issues/{n}",
        "id": 1000 + n,
        "node_id": "I_kwDOAbCdEf5" + str(n),
        "number": n,
        "title": f"Crash when saving draft {n}",
        "user": user,
        "labels": [
            {"id": 1, "node_id": "LA_1", "url": "https://api.github.test/repos/acme/web/labels/bug", "name": "bug", "color": "d73a4a", "default": True, "description": "Something is broken"},
            {"id": 2, "node_id": "LA_2", "url": "https://api.github.test/repos/acme/web/labels/p1", "name": "p1", "color": "b60205", "default": False, "description": "High priority"},
        ],
        "state": "open",
        "locked": False,
        "assignee": None,
        "assignees": [],
        "milestone": None,
        "comments": 3,
        "created_at": "2026-03-01T10:00:00Z",
        "updated_at": "2026-03-02T11:30:00Z",
        "closed_at": None,
        "author_association": "MEMBER",
        "active_lock_reason": None,
        "body": "Steps: open editor, type, press save. Expected: saved. Actual: crash.",
        "reactions": {"url": base + "/reactions", "total_count": 2, "+1": 2, "-1": 0, "laugh": 0, "hooray": 0, "confused": 0, "heart": 0, "rocket": 0, "eyes": 0},
        "timeline_url": base + "/timeline",
        "performed_via_github_app": None,
        "state_reason": None,
    }


PROJECTION = "{number, title, state, url: .html_url, author: .user.login, labels: [.labels[].name], comments}"

INPUTS = {
    "items": [{"id": 1, "name": "a", "n": 3, "tags": ["x", "y"]}, {"id": 2, "name": "b", "n": 1, "tags": []}, {"id": 3, "name": "c", "n": 2, "tags": ["y"]}],
    "envelope": {"data": {"results": [{"id": 1, "meta": {"etag": "e1"}}, {"id": 2, "meta": {"etag": "e2"}}]}, "next": None},
    "obj": {"a": 1, "b": {"c": [1, 2, 3]}, "d": None, "e": "Hello World"},
    "issues": [issue(1), issue(2)],
}

CASES = [
    (".", "obj"),
    (".a", "obj"),
    (".b.c[1]", "obj"),
    (".b.c[-1]", "obj"),
    (".b.c[1:]", "obj"),
    (".d // \"default\"", "obj"),
    ("keys", "obj"),
    ("del(.b, .d)", "obj"),
    ("to_entries | map(select(.value != null)) | from_entries", "obj"),
    (".e | ascii_downcase | split(\" \")", "obj"),
    ("[.[] | .id]", "items"),
    ("map(.id)", "items"),
    ("map(select(.n > 1)) | map(.name)", "items"),
    ("map({id, name})", "items"),
    ("map({key: .name, value: .n}) | from_entries", "items"),
    ("sort_by(.n) | map(.id)", "items"),
    ("map(.n) | add", "items"),
    ("[.[] | select(.tags | length > 0) | .name]", "items"),
    ("map(.tags) | add | unique", "items"),
    ("length", "items"),
    ("first(.[] | select(.n < 3)) | .id", "items"),
    ("map(if .n > 2 then \"big\" elif .n > 1 then \"mid\" else \"small\" end)", "items"),
    ("[limit(2; .[])] | map(.id)", "items"),
    ("map(has(\"tags\")) | all", "items"),
    (".data.results | map(del(.meta))", "envelope"),
    (".data.results[] | .meta.etag", "envelope"),
    ("map(" + PROJECTION + ")", "issues"),
]


def main():
    cases = []
    for flt, name in CASES:
        outputs = jq.compile(flt).input_value(INPUTS[name]).all()
        cases.append({"filter": flt, "input": name, "outputs": outputs})
    doc = {"inputs": INPUTS, "projection": PROJECTION, "cases": cases}
    (HERE / "jq_cases.json").write_text(json.dumps(doc, indent=1) + "\n")
    single = issue(7)
    print("item bytes", len(json.dumps(single, separators=(",", ":"))))
    print("projected bytes", len(json.dumps(jq.compile(PROJECTION).input_value(single).first(), separators=(",", ":"))))


main()
