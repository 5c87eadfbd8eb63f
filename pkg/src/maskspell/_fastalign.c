/* C accelerator for integer-sequence edit alignment.
 *
 * Mirrors the pure-Python DP in align.py exactly: strip the common
 * prefix/suffix, unit-cost DP, backtrace preferring diagonal over
 * deletion over insertion on cost ties.  Only sequences of plain ints are
 * handled; anything else raises TypeError so the caller can fall back.
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdlib.h>

static PyObject *kind_match;
static PyObject *kind_sub;
static PyObject *kind_del;
static PyObject *kind_ins;

static long *
read_longs(PyObject *fast, Py_ssize_t n, int *ok)
{
    long *out = PyMem_Malloc((n ? n : 1) * sizeof(long));
    if (out == NULL) {
        PyErr_NoMemory();
        *ok = 0;
        return NULL;
    }
    PyObject **items = PySequence_Fast_ITEMS(fast);
    for (Py_ssize_t i = 0; i < n; i++) {
        PyObject *it = items[i];
        if (!PyLong_CheckExact(it)) {
            PyMem_Free(out);
            PyErr_SetString(PyExc_TypeError, "fast path requires int items");
            *ok = 0;
            return NULL;
        }
        long v = PyLong_AsLong(it);
        if (v == -1 && PyErr_Occurred()) {
            PyMem_Free(out);
            *ok = 0;
            return NULL;
        }
        out[i] = v;
    }
    *ok = 1;
    return out;
}

/* Append one (kind, ref_pos, hyp_pos) tuple at index idx; pos < 0 -> None. */
static int
set_op(PyObject *ops, Py_ssize_t idx, PyObject *kind, Py_ssize_t ref_pos, Py_ssize_t hyp_pos)
{
    PyObject *rp, *hp;
    PyObject *op = PyTuple_New(3);
    if (op == NULL)
        return -1;
    Py_INCREF(kind);
    PyTuple_SET_ITEM(op, 0, kind);
    if (ref_pos < 0) {
        Py_INCREF(Py_None);
        rp = Py_None;
    } else {
        rp = PyLong_FromSsize_t(ref_pos);
        if (rp == NULL) {
            Py_DECREF(op);
            return -1;
        }
    }
    PyTuple_SET_ITEM(op, 1, rp);
    if (hyp_pos < 0) {
        Py_INCREF(Py_None);
        hp = Py_None;
    } else {
        hp = PyLong_FromSsize_t(hyp_pos);
        if (hp == NULL) {
            Py_DECREF(op);
            return -1;
        }
    }
    PyTuple_SET_ITEM(op, 2, hp);
    PyTuple_SET_ITEM(ops, idx, op);
    return 0;
}

static PyObject *
align_ops(PyObject *self, PyObject *args)
{
    PyObject *ref_obj, *hyp_obj;
    if (!PyArg_ParseTuple(args, "OO", &ref_obj, &hyp_obj))
        return NULL;

    PyObject *ref_fast = PySequence_Fast(ref_obj, "expected a sequence");
    if (ref_fast == NULL)
        return NULL;
    PyObject *hyp_fast = PySequence_Fast(hyp_obj, "expected a sequence");
    if (hyp_fast == NULL) {
        Py_DECREF(ref_fast);
        return NULL;
    }

    Py_ssize_t r = PySequence_Fast_GET_SIZE(ref_fast);
    Py_ssize_t h = PySequence_Fast_GET_SIZE(hyp_fast);

    int ok = 0;
    long *ra = read_longs(ref_fast, r, &ok);
    Py_DECREF(ref_fast);
    if (!ok) {
        Py_DECREF(hyp_fast);
        return NULL;
    }
    long *ha = read_longs(hyp_fast, h, &ok);
    Py_DECREF(hyp_fast);
    if (!ok) {
        PyMem_Free(ra);
        return NULL;
    }

    Py_ssize_t pre = 0;
    while (pre < r && pre < h && ra[pre] == ha[pre])
        pre++;
    Py_ssize_t post = 0;
    while (post < r - pre && post < h - pre && ra[r - 1 - post] == ha[h - 1 - post])
        post++;

    Py_ssize_t n = r - post - pre;
    Py_ssize_t m = h - post - pre;
    long *ref_mid = ra + pre;
    long *hyp_mid = ha + pre;

    Py_ssize_t width = m + 1;
    int *dist = PyMem_Malloc((size_t)(n + 1) * (size_t)width * sizeof(int));
    if (dist == NULL) {
        PyMem_Free(ra);
        PyMem_Free(ha);
        return PyErr_NoMemory();
    }
    for (Py_ssize_t j = 0; j <= m; j++)
        dist[j] = (int)j;
    for (Py_ssize_t i = 1; i <= n; i++) {
        int *row = dist + i * width;
        const int *prev = row - width;
        row[0] = (int)i;
        long cr = ref_mid[i - 1];
        for (Py_ssize_t j = 1; j <= m; j++) {
            int best = prev[j - 1] + (cr != hyp_mid[j - 1]);
            int up = prev[j] + 1;
            if (up < best)
                best = up;
            int left = row[j - 1] + 1;
            if (left < best)
                best = left;
            row[j] = best;
        }
    }
    int cost = dist[n * width + m];

    /* Backtrace into a scratch op list (kind ptr + positions), reversed. */
    Py_ssize_t max_mid = n + m;
    PyObject **mk = NULL;
    Py_ssize_t *mr = NULL, *mh = NULL;
    if (max_mid > 0) {
        mk = PyMem_Malloc(max_mid * sizeof(PyObject *));
        mr = PyMem_Malloc(max_mid * sizeof(Py_ssize_t));
        mh = PyMem_Malloc(max_mid * sizeof(Py_ssize_t));
        if (mk == NULL || mr == NULL || mh == NULL) {
            PyMem_Free(ra); PyMem_Free(ha); PyMem_Free(dist);
            PyMem_Free(mk); PyMem_Free(mr); PyMem_Free(mh);
            return PyErr_NoMemory();
        }
    }
    Py_ssize_t nm = 0;
    Py_ssize_t i = n, j = m;
    while (i > 0 && j > 0) {
        int cur = dist[i * width + j];
        int same = ref_mid[i - 1] == hyp_mid[j - 1];
        if (cur == dist[(i - 1) * width + j - 1] + (same ? 0 : 1)) {
            mk[nm] = same ? kind_match : kind_sub;
            mr[nm] = pre + i - 1;
            mh[nm] = pre + j - 1;
            nm++; i--; j--;
        } else if (cur == dist[(i - 1) * width + j] + 1) {
            mk[nm] = kind_del; mr[nm] = pre + i - 1; mh[nm] = -1;
            nm++; i--;
        } else {
            mk[nm] = kind_ins; mr[nm] = -1; mh[nm] = pre + j - 1;
            nm++; j--;
        }
    }
    while (i > 0) {
        mk[nm] = kind_del; mr[nm] = pre + i - 1; mh[nm] = -1;
        nm++; i--;
    }
    while (j > 0) {
        mk[nm] = kind_ins; mr[nm] = -1; mh[nm] = pre + j - 1;
        nm++; j--;
    }
    PyMem_Free(dist);
    PyMem_Free(ra);
    PyMem_Free(ha);

    PyObject *ops = PyTuple_New(pre + nm + post);
    if (ops == NULL) {
        PyMem_Free(mk); PyMem_Free(mr); PyMem_Free(mh);
        return NULL;
    }
    Py_ssize_t idx = 0;
    for (Py_ssize_t k = 0; k < pre; k++, idx++) {
        if (set_op(ops, idx, kind_match, k, k) < 0)
            goto fail;
    }
    for (Py_ssize_t k = nm - 1; k >= 0; k--, idx++) {
        if (set_op(ops, idx, mk[k], mr[k], mh[k]) < 0)
            goto fail;
    }
    for (Py_ssize_t k = 0; k < post; k++, idx++) {
        if (set_op(ops, idx, kind_match, r - post + k, h - post + k) < 0)
            goto fail;
    }
    PyMem_Free(mk); PyMem_Free(mr); PyMem_Free(mh);

    PyObject *result = Py_BuildValue("(Ni)", ops, cost);
    if (result == NULL)
        Py_DECREF(ops);
    return result;

fail:
    PyMem_Free(mk); PyMem_Free(mr); PyMem_Free(mh);
    Py_DECREF(ops);
    return NULL;
}

static PyMethodDef methods[] = {
    {"align_ops", align_ops, METH_VARARGS,
     "align_ops(ref, hyp) -> (ops, cost) for int sequences"},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef moduledef = {
    PyModuleDef_HEAD_INIT, "_fastalign", NULL, -1, methods,
};

PyMODINIT_FUNC
PyInit__fastalign(void)
{
    kind_match = PyUnicode_InternFromString("match");
    kind_sub = PyUnicode_InternFromString("sub");
    kind_del = PyUnicode_InternFromString("del");
    kind_ins = PyUnicode_InternFromString("ins");
    if (!kind_match || !kind_sub || !kind_del || !kind_ins)
        return NULL;
    return PyModule_Create(&moduledef);
}
