"""Default stateful-library signatures, written in the surface syntax.

The prelude ships the key-value store triple (put unconditionally appends;
get requires its key to hold a ghost value and returns it; exists is the
two-way intersection over key presence) and the set pair (insert appends;
mem is the two-way membership intersection).  Programs opt in and may
redeclare any operator with different sorts.
"""

from __future__ import annotations

BUILTIN_PRELUDE = """
sort Path
sort Bytes

effect put : (k:Path) -> (v:Bytes) ->
  [G <|true|>] unit [<put x y | x == k /\\ y == v> /\\ last]

invariant kv_exists(key:Path) = F <put x y | x == key>
invariant kv_stored(key:Path, value:Bytes) =
  F (<put x y | x == key /\\ y == value> /\\ X G ~<put x y | x == key>)

effect get : (a:Bytes) => (k:Path) ->
  [kv_stored(k, a)] {nu:Bytes | nu == a} [<get x | x == k /\\ nu == a> /\\ last]

effect exists : (k:Path) ->
    ([kv_exists(k)] {nu:bool | nu == true} [<exists x | x == k /\\ nu == true> /\\ last])
 /\\ ([~kv_exists(k)] {nu:bool | nu == false} [<exists x | x == k /\\ nu == false> /\\ last])

effect insert : (x:int) ->
  [G <|true|>] unit [<insert y | y == x> /\\ last]

invariant set_has(e:int) = F <insert x | x == e>

effect mem : (x:int) ->
    ([set_has(x)] {nu:bool | nu == true} [<mem y | y == x /\\ nu == true> /\\ last])
 /\\ ([~set_has(x)] {nu:bool | nu == false} [<mem y | y == x /\\ nu == false> /\\ last])
"""


def prelude_program():
    from .parser import parse_program

    return parse_program(BUILTIN_PRELUDE)
