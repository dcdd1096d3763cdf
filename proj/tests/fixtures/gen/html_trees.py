"""Regenerates html_trees.jsonl with html5lib as the reference parser.

Each case is wrapped in an explicit html/head/body skeleton so the reference
tree has no implied elements the lenient parser would not create.
"""
import json
import re
import sys

import html5lib

CASES = [
    "<div><p>one<p>two</div>",
    "<ul><li>a<li>b<li>c</ul>",
    "<dl><dt>x<dd>y<dt>z<dd>w</dl>",
    "<p>para<div>block</div>",
    "<select><option>a<option>b<optgroup label=g><option>c</select>",
    "<div><img src=a.png alt=\"x y\"><br><input type=hidden name=t value='v'></div>",
    "<script>if (a<b) { eval(atob(\"x\")) }</script><p>t",
    "<h1>a<h2>b</h2>",
    "<p title=\"a&amp;b\">x &lt; y &#65;&#x42;</p>",
    "<!-- c --><div>x<!-- y -->z</div>",
    "<div><span>abc",
    "<table><tbody><tr><td>1<td>2<tr><td>3</tbody></table>",
    "<DIV CLASS=\"A\">X</DIV>",
    "<a href=1>x<a href=2>y</a>",
    "<form action=\"http://evil.example/x\" style=\"display:none\"><input type=password name=p></form>",
    "<div id=a id=b class=c>dup</div>",
    "<textarea>a &amp; <b>b</b></textarea>",
    "<li>a<div><li>b",
    "<p>a<button><p>b</button>",
    "<style>.x{display:none}</style><div   class='q'>  spaced\n\ttext  </div>",
]

WS = re.compile(r"[ \t\n\r\f]+")


def collapse(parts):
    return " ".join(w for p in parts for w in WS.split(p) if w)


def dump(root):
    nodes, edges = [], []

    def visit(el, node_id, parent):
        idx = len(nodes)
        parts = [el.text or ""] + [c.tail or "" for c in el]
        nodes.append({
            "id": node_id,
            "dfs_index": idx,
            "tag": el.tag,
            "attributes": [[k, v] for k, v in el.attrib.items()],
            "text": collapse(parts),
        })
        if parent is not None:
            edges.append([parent, idx])
        children = [c for c in el if isinstance(c.tag, str)]
        for i, c in enumerate(children):
            visit(c, f"{node_id}/{i}", idx)

    visit(root, "0", None)
    return {"nodes": nodes, "edges": edges}


def main(out_path):
    with open(out_path, "w", encoding="utf-8") as out:
        for body in CASES:
            doc = "<!DOCTYPE html><html><head></head><body>" + body + "</body></html>"
            root = html5lib.parse(doc, treebuilder="etree", namespaceHTMLElements=False)
            rec = {"html": doc}
            rec.update(dump(root))
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "html_trees.jsonl")
