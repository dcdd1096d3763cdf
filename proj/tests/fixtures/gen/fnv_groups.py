"""Regenerates fnv_groups.json: FNV-1a 64 group table for a 10-node document."""
import json
import sys

DOC = ("<html><head><title>t</title></head><body><div id=a><p>x<b>k</b></p><a href=u>y</a></div>"
       "<form action=z><input name=q></form></body></html>")
# Node ids of DOC in preorder, traced by hand.
IDS = ["0", "0/0", "0/0/0", "0/1", "0/1/0", "0/1/0/0", "0/1/0/0/0", "0/1/0/1", "0/1/1", "0/1/1/0"]


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def main(path):
    ids = IDS
    rows = [{"node_id": i, "fnv1a64": format(fnv1a64(i.encode()), "016x"),
             "group_t5": fnv1a64(i.encode()) % 5 + 1} for i in ids]
    with open(path, "w") as f:
        json.dump({"html": DOC, "document_ids": IDS, "t_f": 5, "rows": rows}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fnv_groups.json")
