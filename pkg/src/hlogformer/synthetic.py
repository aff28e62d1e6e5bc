"""Synthetic corpora for desk-scale experiments.

``synth_logs`` produces CloudTrail-like records, three to four levels deep
and roughly 300 tokens long once linearized, so a flat encoder with a
128-token window sees each record in three disconnected pieces. Planted
dependencies:

* the trailing top-level fields (``readonly``, ``eventcategory``,
  ``managementevent``, ``apiversion``, ``sessionregion``,
  ``recipientaccountid``, ``requestsource``) are fixed by the leading ones
  (``eventsource``, ``eventname``, ``awsregion``, ``sourceipaddress``,
  ``useragent``); in the tree they are siblings, in the linearized record
  the nested blocks push them far apart;
* ``useridentity.sessioncontext.sessionissuer.username`` is a role fixed by
  the acting user and the service;
* every ``resources[i]`` item repeats the service, region and account;
* ``requestparameters`` keys and values are fixed by service and operation;
* ``responseelements.status`` follows ``errorcode``, ``tlsdetails.cipher``
  follows the TLS version; the ``responseelements.items`` list is local
  filler that reveals nothing about the record's actor or service.

``synth_items`` produces product-metadata records drawn from latent clusters
and user purchase histories that mostly stay inside one or two clusters.
"""

from __future__ import annotations

import json

import numpy as np

_USERS = [
    # name, principal, ip block, agent, identity type, mfa
    ("alice", "aida1", "10_0_1", "console", "iamuser", "true"),
    ("bob", "aida2", "10_0_2", "boto3", "iamuser", "false"),
    ("carol", "aida3", "10_0_3", "terraform", "iamuser", "true"),
    ("dave", "aroa4", "10_0_4", "cli", "assumedrole", "true"),
    ("erin", "aroa5", "10_0_5", "console", "assumedrole", "false"),
    ("frank", "aroa6", "10_0_6", "sdk_java", "assumedrole", "true"),
    ("grace", "aida7", "172_16_1", "boto3", "iamuser", "true"),
    ("heidi", "aida8", "172_16_2", "cli", "iamuser", "false"),
    ("ivan", "aroa9", "172_16_3", "terraform", "assumedrole", "true"),
    ("judy", "aroa10", "172_16_4", "sdk_go", "assumedrole", "false"),
]

_ROLES = ["admin_role", "readonly_role", "deploy_role", "audit_role", "ops_role",
          "data_role", "billing_role", "lambda_exec", "ci_runner", "breakglass"]

_SERVICES = [
    # source, short, resource type, operations, request keys, request values
    ("s3", "bucket", ["getobject", "putobject", "listbuckets", "deleteobject"],
     ["bucketname", "prefix"], ["logs", "backups", "assets", "uploads", "reports"]),
    ("ec2", "instance", ["runinstances", "stopinstances", "describeinstances", "terminateinstances"],
     ["instanceid", "instancetype"], ["t3_micro", "m5_large", "c5_xlarge", "r5_large", "i_0a1b"]),
    ("iam", "user", ["createuser", "attachuserpolicy", "listroles", "deleteaccesskey"],
     ["username", "policyarn"], ["svc_account", "readonlyaccess", "poweruser", "temp_user", "auditor"]),
    ("lambda", "function", ["invoke", "createfunction", "updatefunctioncode", "listfunctions"],
     ["functionname", "runtime"], ["python3_11", "nodejs20", "resize_img", "etl_job", "notifier"]),
    ("kms", "key", ["decrypt", "encrypt", "createkey", "schedulekeydeletion"],
     ["keyid", "encryptioncontext"], ["mrk_1", "alias_app", "alias_db", "tenant_a", "tenant_b"]),
    ("sts", "session", ["assumerole", "getcalleridentity", "getsessiontoken", "decodemessage"],
     ["rolesessionname", "durationseconds"], ["3600", "900", "43200", "ci_session", "sso_login"]),
]

_REGIONS = ["us_east_1", "us_west_2", "eu_west_1", "ap_south_1", "sa_east_1"]
_ACCOUNTS = ["acct_1234", "acct_5678", "acct_9012"]
_ERRORS = [("none", "success"), ("accessdenied", "denied"), ("throttling", "retry")]
_TLS = [("tlsv1_2", "ecdhe_rsa_aes128"), ("tlsv1_3", "tls_aes_256_gcm")]
_API_VERSIONS = ["2006_03_01", "2016_11_15", "2010_05_08", "2015_03_31", "2014_11_01", "2011_06_15"]
_AUTH = ["authheader", "querystring"]
_SIGNATURES = ["sigv4", "sigv2"]
_STATES = ["active", "pending", "stopped"]


def _role(user: int, service: int) -> str:
    return _ROLES[(3 * user + 7 * service) % len(_ROLES)]


def synth_log(rng: np.random.Generator) -> dict:
    u = int(rng.integers(len(_USERS)))
    s = int(rng.integers(len(_SERVICES)))
    r = int(rng.integers(len(_REGIONS)))
    op = int(rng.integers(4))
    name, principal, ip, agent, idtype, mfa = _USERS[u]
    source, restype, ops, keys, values = _SERVICES[s]
    region = _REGIONS[r]
    account = _ACCOUNTS[u % len(_ACCOUNTS)]
    err = 0 if rng.random() < 0.8 else int(rng.integers(1, len(_ERRORS)))
    tls = _TLS[int(rng.integers(2))]
    read = op in (0, 2)

    v1 = values[(op + u) % len(values)]
    v2 = values[(op + u + 2) % len(values)]
    n_res = 2 + int(rng.integers(3))
    resources = [
        {"type": f"aws {restype}", "arn": f"arn aws {source} {region} {account} {restype} {values[(op + j) % 5]}",
         "accountid": account, "region": region}
        for j in range(n_res)
    ]
    return {
        "eventversion": "1.08",
        "eventsource": f"{source} amazonaws com",
        "eventname": ops[op],
        "awsregion": region,
        "sourceipaddress": f"{ip} {int(rng.integers(2, 6))}",
        "useragent": f"{agent} {region}",
        "useridentity": {
            "type": idtype,
            "principalid": principal,
            "username": name,
            "accountid": account,
            "sessioncontext": {
                "attributes": {"mfaauthenticated": mfa, "creationhour": str(int(rng.integers(24)))},
                "sessionissuer": {"type": "role", "username": _role(u, s), "accountid": account},
            },
        },
        "eventtime": {"day": str(int(rng.integers(1, 29))), "hour": str(int(rng.integers(24)))},
        "requestparameters": {keys[0]: v1, keys[1]: v2, "region": region},
        "resources": resources,
        "responseelements": {
            "errorcode": _ERRORS[err][0],
            "status": _ERRORS[err][1],
            # fewer items when there are more resources keeps record lengths close
            "items": [{"itemid": str(int(rng.integers(10))), "state": _STATES[int(rng.integers(3))],
                       "attempt": str(int(rng.integers(1, 4)))}
                      for _ in range(10 - n_res)],
        },
        "additionaleventdata": {"signatureversion": _SIGNATURES[int(rng.random() < 0.1)],
                                "authenticationmethod": _AUTH[int(rng.random() < 0.2)],
                                "bytestransferredin": str(int(rng.integers(0, 10)))},
        "tlsdetails": {"version": tls[0], "cipher": tls[1]},
        "readonly": "true" if read else "false",
        "eventcategory": "data" if read else "management",
        "managementevent": "false" if read else "true",
        "apiversion": _API_VERSIONS[s],
        "sessionregion": region,
        "recipientaccountid": account,
        "requestsource": agent,
    }


def synth_logs(n: int = 500, seed: int = 0) -> list[str]:
    rng = np.random.default_rng(seed)
    return [json.dumps(synth_log(rng)) for _ in range(n)]


# ---------------------------------------------------------------- items

_CATEGORIES = {
    "beauty": ["skincare", "haircare", "fragrance"],
    "home": ["kitchen", "bedding", "decor"],
    "sports": ["running", "cycling", "yoga"],
    "electronics": ["audio", "cameras", "wearables"],
}
_BRANDS = ["acme", "zenith", "nova", "orbit", "lumen", "tundra", "vertex", "pioneer",
           "harbor", "summit", "willow", "cobalt"]
_MATERIALS = ["cotton", "steel", "plastic", "glass", "bamboo", "leather", "aluminum", "ceramic"]
_COLORS = ["red", "blue", "black", "white", "green", "grey", "pink", "gold"]
_STYLES = ["modern", "classic", "sporty", "minimal", "vintage", "rugged"]
_NOUNS = ["kit", "set", "pack", "bundle", "device", "case", "stand", "bottle"]
_FEATURES = ["waterproof", "portable", "rechargeable", "organic", "durable", "lightweight",
             "wireless", "handmade", "foldable", "adjustable", "eco", "premium"]


def _cluster_profile(c: int) -> dict:
    mains = list(_CATEGORIES)
    main = mains[c // 3]
    return {
        "main": main,
        "sub": _CATEGORIES[main][c % 3],
        "brands": [_BRANDS[c % 12], _BRANDS[(c * 5 + 3) % 12]],
        "material": _MATERIALS[(c * 3) % 8],
        "style": _STYLES[c % 6],
        "features": [_FEATURES[c % 12], _FEATURES[(c + 4) % 12], _FEATURES[(c * 7 + 1) % 12]],
        "price": ["low", "mid", "high"][c % 3],
    }


def synth_item(rng: np.random.Generator, cluster: int, noise: float = 0.3) -> dict:
    prof = _cluster_profile(cluster)

    def pick(own, pool):
        return own if rng.random() > noise else pool[int(rng.integers(len(pool)))]

    brand = prof["brands"][int(rng.integers(2))]
    return {
        "title": f"{pick(prof['style'], _STYLES)} {_NOUNS[int(rng.integers(len(_NOUNS)))]}",
        "category": {"main": prof["main"], "sub": pick(prof["sub"], sum(_CATEGORIES.values(), []))},
        "details": {
            "brand": pick(brand, _BRANDS),
            "material": pick(prof["material"], _MATERIALS),
            "dimensions": {"size": ["small", "medium", "large"][int(rng.integers(3))],
                           "weight": str(int(rng.integers(1, 20)))},
        },
        "attributes": {"color": _COLORS[int(rng.integers(len(_COLORS)))], "style": pick(prof["style"], _STYLES)},
        "features": [pick(f, _FEATURES) for f in prof["features"][:1 + int(rng.integers(3))]],
        "price": {"bucket": pick(prof["price"], ["low", "mid", "high"]), "currency": "usd"},
        "store": f"{brand} store",
    }


def synth_items(n_items: int = 600, n_users: int = 200, seed: int = 0, n_clusters: int = 12,
                history_len: tuple[int, int] = (20, 30), loyalty: float = 0.85):
    """Returns (item JSON lines, cluster per item, purchase histories as item indices)."""
    rng = np.random.default_rng(seed)
    clusters = rng.integers(n_clusters, size=n_items)
    items = [json.dumps(synth_item(rng, int(c))) for c in clusters]
    by_cluster = {c: np.flatnonzero(clusters == c) for c in range(n_clusters)}
    histories = []
    for _ in range(n_users):
        liked = rng.choice(n_clusters, size=1 + int(rng.integers(2)), replace=False)
        length = int(rng.integers(history_len[0], history_len[1] + 1))
        seen: list[int] = []
        while len(seen) < length:
            if rng.random() < loyalty:
                pool = by_cluster[int(liked[int(rng.integers(len(liked)))])]
            else:
                pool = np.arange(n_items)
            item = int(pool[int(rng.integers(len(pool)))])
            if item not in seen:
                seen.append(item)
        histories.append(seen)
    return items, clusters.tolist(), histories
